from django.apps import AppConfig


class InformerConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "informer"
