# utils/responses.py - Standard command response utilities
import json

import click

from models.records import canonical_json


class CommandError(click.ClickException):
    """Failure reported to the shell with a non-zero exit code"""

    def __init__(self, message, exit_code=1):
        super().__init__(message)
        self.exit_code = exit_code


def success_response(data=None, status_code=0):
    """Echo a standardized JSON success summary to stdout"""
    response = {
        'success': True,
        'status': status_code
    }

    if data:
        if isinstance(data, dict):
            response.update(data)
        else:
            response['data'] = data

    click.echo(json.dumps(json.loads(canonical_json(response)), indent=2, sort_keys=True))
    return response


def error_response(message, status_code=1, output=None):
    """Remove partial outputs, then abort the command with status_code"""
    if output is not None:
        output.cleanup()
    raise CommandError(message, exit_code=status_code)
