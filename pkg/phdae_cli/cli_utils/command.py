import os
import sys
import traceback
import typing as t

from click.core import Command, Context
from rich.console import Console
from rich.markup import escape

from phdae_cli.error import PhDaeError
from phdae_cli.exitcode import EC_ERR_GENERAL
from phdae_cli.guide import Guide

_enable_traceback: bool = os.environ.get('PHDAE_PRINT_TRACEBACK') == '1'

guide = Guide()


class PhDaeCommand(Command):
    """
    Click command that turns package errors into a message, a hint and an exit code.
    """

    def _show_error_message(self, msg, params):
        console = Console(stderr=True)
        if params.get('debug'):
            console.print_exception(show_locals=True)
        else:
            console.print('[bold red]Error:[/bold red] ', end='')
            console.out(msg, highlight=False)

    def _show_hint_message(self, hint):
        console = Console(stderr=True)
        console.print(f'[bold yellow]Hint[/bold yellow]:\n  {escape(hint)}')

    def invoke(self, ctx: Context) -> t.Any:
        try:
            ret = super(PhDaeCommand, self).invoke(ctx)
            if ret is None or ret == 0:
                guide.show_tips(ctx.command.name, ctx.params.get('out'))
            return ret
        except SystemExit as e:
            raise e
        except KeyboardInterrupt as e:
            raise e
        except Exception as e:
            if _enable_traceback:
                print(traceback.format_exc(), file=sys.stderr)

            exit_code = EC_ERR_GENERAL
            if isinstance(e, PhDaeError):
                exit_code = e.exit_code
                if e.hint:
                    self._show_hint_message(e.hint)

            self._show_error_message(e, ctx.params)
            sys.exit(exit_code)
