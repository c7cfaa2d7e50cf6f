from django.apps import AppConfig


class LTDataConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'ltdata'
