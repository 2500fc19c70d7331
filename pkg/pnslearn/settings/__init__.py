from decouple import config

# DJANGO_ENV=production for batch hosts; anything else runs development settings
if config("DJANGO_ENV", default="development") == "production":
    from .production import *  # noqa: F401,F403
else:
    from .development import *  # noqa: F401,F403
