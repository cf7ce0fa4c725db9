# Single source of truth for the tool name and version.
# Witness files record it; replay refuses witnesses from other versions.
APP_NAME = "PathDetective"
APP_VERSION = "0.3.0"
