from django.apps import AppConfig


class DatagenConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "datagen"
