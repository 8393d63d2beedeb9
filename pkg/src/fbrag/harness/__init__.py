from .cli import cmd_rerun, cmd_run, cmd_sweep, main
from .manifest import RunManifest
from .runconfig import RunConfig, load_run_config
