from django.apps import AppConfig


class GhostConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'ghost'
    verbose_name = 'Ghost diffraction experiment'
