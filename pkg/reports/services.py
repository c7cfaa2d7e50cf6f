"""
Report documents, renderings and the evaluation audit trail.

Documents are YAML trees with the key layout fixed in docs/report_format.md.
Floats are written with 17 significant digits in exponent form, which
round-trips every float64 exactly.
"""
import hashlib
import logging
import math
import os
import tempfile
from datetime import datetime, timezone as dt_timezone
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
import yaml
from django.conf import settings

from distributions.types import ConfusionMatrix, GroupSpec
from ltdata.types import LTProfile
from metrics.types import AccTrapPair, GroupAccuracy, GroupShare, MetricsReport
from trainer.types import ExperimentResult
from utils.enums import RunCommand
from .models import EvaluationRun
from .parsers import CONFUSION_INDEX

logger = logging.getLogger(__name__)

FORMAT_NAME = "pdc-report/1"
HEATMAP_RAMP = " .:-=+*#%@"


def format_float(value: float) -> str:
    """17 significant digits in exponent form; YAML spellings for non-finite values"""
    value = float(value)
    if math.isnan(value):
        return '.nan'
    if math.isinf(value):
        return '.inf' if value > 0 else '-.inf'
    digits = getattr(settings, 'REPORT_FLOAT_DIGITS', 17)
    return f"{value:.{digits - 1}e}"


class ReportDumper(yaml.SafeDumper):
    pass


def _represent_float(dumper, value):
    return dumper.represent_scalar('tag:yaml.org,2002:float', format_float(value))


def _represent_int(dumper, value):
    return dumper.represent_int(int(value))


ReportDumper.add_representer(float, _represent_float)
ReportDumper.add_representer(np.float64, _represent_float)
ReportDumper.add_representer(np.int64, _represent_int)


class ReportService:

    # ------------------------------------------------------------------
    # metadata
    # ------------------------------------------------------------------

    @staticmethod
    def file_digest(path) -> str:
        sha = hashlib.sha256()
        with open(path, 'rb') as handle:
            for chunk in iter(lambda: handle.read(1 << 16), b''):
                sha.update(chunk)
        return sha.hexdigest()

    @staticmethod
    def build_metadata(command: str, inputs: Dict[str, str], num_classes: int, num_test: int,
                       alpha: float, epsilon: float, group_spec: GroupSpec, **extra) -> Dict:
        """
        Provenance block shared by every document. `inputs` maps a role
        (predictions, train_counts, config) to a file path.
        """
        metadata = {
            'tool_version': getattr(settings, 'TOOL_VERSION', '1.0.0'),
            'command': str(command),
            'created_at': datetime.now(dt_timezone.utc).isoformat(timespec='seconds'),
            'inputs': {
                role: {'path': str(path), 'sha256': ReportService.file_digest(path)}
                for role, path in inputs.items()
            },
            'num_classes': int(num_classes),
            'num_test': int(num_test),
            'smoothing_alpha': float(alpha),
            'epsilon': float(epsilon),
            'group_thresholds': {'many_min': group_spec.many_min, 'few_max': group_spec.few_max},
        }
        metadata.update(extra)
        return metadata

    # ------------------------------------------------------------------
    # document trees
    # ------------------------------------------------------------------

    @staticmethod
    def metrics_tree(report: MetricsReport) -> Dict:
        tree = {
            'top1_acc': report.top1_acc,
            'group_acc': {
                'many': report.group_acc.many,
                'medium': report.group_acc.medium,
                'few': report.group_acc.few,
            },
            'per_class_recall': list(report.per_class_recall),
            'kl_pred_target': report.kl_pred_target,
            'kl_train_target': report.kl_train_target,
            'pdc': report.pdc,
            'predicted_counts': list(report.predicted_counts),
            'test_counts': list(report.test_counts),
            'smoothing_alpha': report.smoothing_alpha,
            'epsilon': report.epsilon,
        }
        if report.group_share is not None:
            tree['group_share'] = {
                'true': dict(report.group_share.true_share),
                'predicted': dict(report.group_share.predicted_share),
            }
        return tree

    @staticmethod
    def metrics_from_tree(tree: Dict) -> MetricsReport:
        share = tree.get('group_share')
        return MetricsReport(
            top1_acc=tree['top1_acc'],
            group_acc=GroupAccuracy(**tree['group_acc']),
            per_class_recall=tuple(tree['per_class_recall']),
            kl_pred_target=tree['kl_pred_target'],
            kl_train_target=tree['kl_train_target'],
            pdc=tree['pdc'],
            predicted_counts=tuple(tree['predicted_counts']),
            test_counts=tuple(tree['test_counts']),
            smoothing_alpha=tree['smoothing_alpha'],
            epsilon=tree['epsilon'],
            group_share=GroupShare(true_share=share['true'], predicted_share=share['predicted']) if share else None,
        )

    @staticmethod
    def eval_document(report: MetricsReport, metadata: Dict,
                      trap_pairs: Sequence[AccTrapPair] = ()) -> Dict:
        return {
            'format': FORMAT_NAME,
            'metadata': metadata,
            'metrics': ReportService.metrics_tree(report),
            'acc_trap_pairs': [
                {
                    'head_class': pair.head_class,
                    'tail_class': pair.tail_class,
                    'head_recall': pair.head_recall,
                    'tail_recall': pair.tail_recall,
                    'head_predictions': pair.head_predictions,
                    'tail_predictions': pair.tail_predictions,
                }
                for pair in trap_pairs
            ],
        }

    @staticmethod
    def experiment_document(result: ExperimentResult, metadata: Dict) -> Dict:
        cells = []
        for cell in result.cells:
            entry = {
                'method': cell.method,
                'imbalance_factor': cell.imbalance_factor,
                'seed': cell.seed,
                'status': 'ok' if cell.ok else 'failed',
            }
            if cell.ok:
                if cell.final_loss is not None:
                    entry['final_loss'] = cell.final_loss
                entry['metrics'] = ReportService.metrics_tree(cell.report)
            else:
                entry['error'] = cell.error
            cells.append(entry)

        return {
            'format': FORMAT_NAME,
            'metadata': metadata,
            'cells': cells,
            'comparison': [
                {
                    'method': row.method,
                    'imbalance_factor': row.imbalance_factor,
                    'pdc_mean': row.pdc_mean,
                    'pdc_sd': row.pdc_sd,
                    'top1_mean': row.top1_mean,
                    'top1_sd': row.top1_sd,
                    'completed': row.completed,
                    'failed': row.failed,
                }
                for row in result.rows
            ],
            'pdc_variance': dict(result.pdc_variance),
            'rankings': [
                {
                    'imbalance_factor': imbalance_factor,
                    'kendall_tau': ranking.kendall_tau,
                    'discordant_pairs': [list(pair) for pair in ranking.discordant_pairs],
                    'ranks': [
                        {'method': r.name, 'accuracy_rank': r.accuracy_rank, 'pdc_rank': r.pdc_rank}
                        for r in ranking.rankings
                    ],
                }
                for imbalance_factor, ranking in result.rankings.items()
            ],
        }

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------

    @staticmethod
    def dump_document(tree: Dict) -> str:
        return yaml.dump(tree, Dumper=ReportDumper, sort_keys=False, allow_unicode=True, default_flow_style=False)

    @staticmethod
    def load_document(text: str) -> Dict:
        return yaml.safe_load(text)

    @staticmethod
    def write_atomic(path, text: str) -> Path:
        """Write to a temporary file beside the target, then rename over it"""
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        handle = tempfile.NamedTemporaryFile(
            'w', encoding='utf-8', newline='', dir=target.parent,
            prefix=f".{target.name}.", suffix='.tmp', delete=False,
        )
        try:
            with handle:
                handle.write(text)
                handle.flush()
                os.fsync(handle.fileno())
            os.replace(handle.name, target)
        except BaseException:
            if os.path.exists(handle.name):
                os.unlink(handle.name)
            raise
        logger.info(f"Wrote {target} ({len(text)} chars)")
        return target

    # ------------------------------------------------------------------
    # renderings
    # ------------------------------------------------------------------

    @staticmethod
    def render_text_table(report: MetricsReport) -> str:
        """
        Plain-text summary. Values use repr(), which round-trips, so the
        table and the document carry identical numbers.
        """
        lines = [
            f"classes: {report.num_classes}   test samples: {report.num_samples}",
            f"top1_acc        {report.top1_acc!r}",
            f"pdc             {report.pdc!r}",
            f"kl_pred_target  {report.kl_pred_target!r}",
            f"kl_train_target {report.kl_train_target!r}",
            f"group_acc       many={report.group_acc.many!r} "
            f"medium={report.group_acc.medium!r} few={report.group_acc.few!r}",
            "",
            "class  test  predicted  recall",
        ]
        for label, (tested, predicted, recall) in enumerate(
                zip(report.test_counts, report.predicted_counts, report.per_class_recall)):
            lines.append(f"{label:>5}  {tested:>4}  {predicted:>9}  {recall!r}")
        return "\n".join(lines)

    @staticmethod
    def comparison_frame(result: ExperimentResult) -> pd.DataFrame:
        frame = pd.DataFrame([
            {
                'method': row.method,
                'IF': row.imbalance_factor,
                'top1_mean': row.top1_mean,
                'top1_sd': row.top1_sd,
                'pdc_mean': row.pdc_mean,
                'pdc_sd': row.pdc_sd,
                'ok': row.completed,
                'failed': row.failed,
            }
            for row in result.rows
        ])
        frame['pdc_var'] = frame['method'].map(lambda m: result.pdc_variance.get(m))
        return frame

    @staticmethod
    def render_comparison_table(result: ExperimentResult) -> str:
        frame = ReportService.comparison_frame(result)
        return frame.to_string(index=False, float_format=lambda value: repr(float(value)), na_rep='-')

    @staticmethod
    def render_heatmap(cm: ConfusionMatrix) -> str:
        """
        One character per cell over row-normalized counts; rows are ground
        truth. Zero is blank and any nonzero share gets at least '.'.
        """
        rows = cm.row_sums.astype(np.float64)
        shares = np.divide(cm.counts, rows[:, None], out=np.zeros(cm.counts.shape), where=rows[:, None] > 0)
        top = len(HEATMAP_RAMP) - 1
        levels = np.ceil(shares * top).astype(int).clip(0, top)
        width = len(str(cm.num_classes - 1))
        header = " " * width + "  " + "".join(str(k % 10) for k in range(cm.num_classes))
        lines = [header]
        for label, row in enumerate(levels):
            lines.append(f"{label:>{width}} |" + "".join(HEATMAP_RAMP[level] for level in row) + "|")
        return "\n".join(lines)

    @staticmethod
    def confusion_csv(cm: ConfusionMatrix) -> str:
        frame = pd.DataFrame(cm.counts, index=range(cm.num_classes), columns=range(cm.num_classes))
        frame.index.name = CONFUSION_INDEX
        return frame.to_csv(lineterminator='\n')

    @staticmethod
    def split_csv(indices: np.ndarray, labels: np.ndarray) -> str:
        frame = pd.DataFrame({'index': indices, 'label': labels[indices]})
        return frame.to_csv(index=False, lineterminator='\n')

    @staticmethod
    def split_stats(profile: LTProfile, selected_labels: np.ndarray, seed: int) -> Dict:
        counts = np.bincount(selected_labels, minlength=profile.num_classes)
        return {
            'num_classes': profile.num_classes,
            'n_max': profile.n_max,
            'requested_imbalance_factor': profile.imbalance_factor,
            'realized_imbalance_factor': profile.realized_imbalance_factor,
            'seed': int(seed),
            'total': int(counts.sum()),
            'class_counts': [int(c) for c in counts],
        }

    # ------------------------------------------------------------------
    # audit trail
    # ------------------------------------------------------------------

    @staticmethod
    def record_run(command: str, document: Dict, text: str, pdc: Optional[float] = None,
                   top1: Optional[float] = None, seed: Optional[int] = None) -> EvaluationRun:
        metadata = document['metadata']
        run = EvaluationRun.objects.create(
            command=RunCommand(command),
            tool_version=metadata['tool_version'],
            input_digests={role: entry['sha256'] for role, entry in metadata['inputs'].items()},
            num_classes=metadata['num_classes'],
            num_samples=metadata['num_test'],
            pdc=None if pdc is None or not math.isfinite(pdc) else pdc,
            top1_acc=top1,
            seed=seed,
            document=text,
        )
        logger.info(f"Recorded evaluation run {run.id} ({command})")
        return run