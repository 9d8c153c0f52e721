"""Error taxonomy shared by the library and the command line.

UsageError covers bad invocations and unusable configuration (exit 1);
DataError covers missing or inconsistent inputs on disk (exit 2).
"""


class UsageError(Exception):
    exit_code = 1


class DataError(Exception):
    exit_code = 2
