"""
Command handlers of the CLI. Each handler takes a CliConfig and returns an
exit status; failures are raised as ProptailError subclasses.
"""
from proptail.commands.generate import cmd_generate
from proptail.commands.estimate import cmd_estimate
from proptail.commands.coupling import cmd_coupling
from proptail.commands.validate import cmd_validate
from proptail.models.enums import Command

HANDLERS = {
    Command.GENERATE: cmd_generate,
    Command.ESTIMATE: cmd_estimate,
    Command.COUPLING: cmd_coupling,
    Command.VALIDATE: cmd_validate,
}

__all__ = ['HANDLERS', 'cmd_generate', 'cmd_estimate', 'cmd_coupling', 'cmd_validate']
