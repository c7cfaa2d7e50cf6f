import json
import logging
import time
from typing import Dict, Optional


class EvaluationAuditLogger:
    """
    Audit logging for evaluation, simulation and experiment events
    """

    def __init__(self):
        self.audit_logger = logging.getLogger('evaluation_audit')

    def log_event(self, event_type: str, run_id: Optional[str] = None,
                  details: Dict = None, severity: str = 'INFO') -> Dict:
        """
        Log an evaluation event and return the structured record
        """
        audit_data = {
            'event_type': event_type,
            'run_id': run_id,
            'timestamp': time.time(),
            'details': details or {},
            'severity': severity
        }

        log_message = f"EVENT: {event_type} | Run: {run_id} | Details: {json.dumps(details, default=str)}"

        if severity == 'ERROR':
            self.audit_logger.error(log_message)
        elif severity == 'WARNING':
            self.audit_logger.warning(log_message)
        else:
            self.audit_logger.info(log_message)
        return audit_data

    def log_metrics(self, run_id: str, command: str, pdc: float, top1: float,
                    num_classes: int, num_samples: int) -> Dict:
        """
        Log the headline numbers of one evaluation
        """
        details = {
            'command': command,
            'pdc': pdc,
            'top1_acc': top1,
            'num_classes': num_classes,
            'num_samples': num_samples,
        }
        return self.log_event('METRICS_COMPUTED', run_id, details, 'INFO')

    def log_failure(self, run_id: Optional[str], operation: str, error_msg: str) -> Dict:
        details = {
            'operation': operation,
            'error_message': error_msg,
        }
        return self.log_event('OPERATION_FAILED', run_id, details, 'ERROR')


evaluation_audit_logger = EvaluationAuditLogger()
