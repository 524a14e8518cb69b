"""
Exception type, logging helpers, the enum and the error catalogue.
"""

import logging
import unittest

from changespot import errors
from changespot.enum_implem import Enum
from changespot.utils import (
    ChangeSpotException,
    current_fn_name,
    floatMaxString,
    log_,
    parse_csv_list,
)


class UtilsTestCase(unittest.TestCase):
    def setUp(self):
        pass

    def tearDown(self):
        pass

    def test_exception(self):
        ex = ChangeSpotException(errors.EMPTY_INDEX.code(), errors.EMPTY_INDEX.msg(), "weak_query")

        self.assertEqual(ex.code, 633)
        self.assertEqual(str(ex), "[633] Index is empty - weak_query")

    def test_enum(self):
        e = Enum("ZERO", "ONE", "TWO")

        self.assertEqual(e.ONE, 1)
        self.assertEqual(e.toStr(e.TWO), "TWO")
        self.assertEqual(e.toStr(7), "NOTFOUND")
        self.assertEqual(e.fromStr("ZERO"), 0)
        self.assertIsNone(e.fromStr("THREE"))
        self.assertEqual(e.names(), ["ZERO", "ONE", "TWO"])

    def test_float_max_string(self):
        self.assertEqual(floatMaxString(1.25), "1.25")
        self.assertEqual(floatMaxString(2.0), "2")
        self.assertEqual(floatMaxString(0.123456789, 3), "0.123")

    def test_parse_csv_list(self):
        self.assertEqual(parse_csv_list("J, B,,G "), ["J", "B", "G"])
        self.assertEqual(parse_csv_list(""), [])

    def test_current_fn_name(self):
        self.assertEqual(current_fn_name(), "test_current_fn_name")

    def test_log(self):
        with self.assertLogs("changespot.utils", level=logging.INFO) as logs:
            log_("cmd_build", {"self": object(), "map_dir": "map"}, "COMMAND")
        self.assertEqual(len(logs.output), 1)
        self.assertIn("COMMAND cmd_build", logs.output[0])
        self.assertNotIn("self", logs.output[0])

    def test_exit_status(self):
        self.assertEqual(errors.exit_status(errors.UNKNOWN_METHOD.code()), errors.EXIT_USAGE)
        self.assertEqual(errors.exit_status(errors.BAD_CONFIG.code()), errors.EXIT_USAGE)
        self.assertEqual(errors.exit_status(errors.PC_UNAVAILABLE.code()), errors.EXIT_UNAVAILABLE)
        self.assertEqual(errors.exit_status(errors.AD_UNAVAILABLE.code()), errors.EXIT_UNAVAILABLE)
        self.assertEqual(errors.exit_status(errors.EMPTY_MAP_DIR.code()), errors.EXIT_DATA)
        self.assertEqual(errors.exit_status(9999), errors.EXIT_DATA)


if "__main__" == __name__:
    unittest.main()
