# -*- coding: utf-8 -*-

from flask import jsonify

from . import api
from ..exceptions import ConfigError, ValidationError


def bad_request(message, path=None):
    payload = {"error": "bad request", "message": message}
    if path is not None:
        payload["path"] = path
    response = jsonify(payload)
    response.status_code = 400
    return response


def not_found(message):
    response = jsonify({"error": "not found", "message": message})
    response.status_code = 404
    return response


@api.errorhandler(ValidationError)  # only for routes from api blueprint
def validation_error(e):
    return bad_request(e.args[0], e.path if isinstance(e, ConfigError) else None)


# the whole app only speaks json, so unknown urls answer in json too
@api.app_errorhandler(404)
def page_not_found(e):
    return not_found("no such resource")


@api.app_errorhandler(405)
def method_not_allowed(e):
    response = jsonify({"error": "method not allowed"})
    response.status_code = 405
    return response
