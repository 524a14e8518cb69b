"""
Collection of misc tools
"""

import sys
import logging

logger = logging.getLogger(__name__)


class ChangeSpotException(Exception):
    def __init__(self, code, msg, text=""):
        super().__init__(code, msg, text)
        self.code = code
        self.msg = msg
        self.text = text

    def __str__(self):
        return f"[{self.code}] {self.msg}{self.text}"


def current_fn_name(parent_idx=0):
    # depth is 1 bc this is already a fn, so we need the caller
    return sys._getframe(1 + parent_idx).f_code.co_name


def floatMaxString(val: float, digits=6):
    return f"{val:.{digits}f}".rstrip("0").rstrip(".")


def parse_csv_list(text):
    return [item.strip() for item in str(text).split(",") if item.strip()]


def log_(func, params, action):
    if logger.isEnabledFor(logging.INFO):
        if "self" in params:
            params = dict(params)
            del params["self"]
        logger.info(f"{action} {func} {params}")
