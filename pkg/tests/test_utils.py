import pytest

from isthmus.utils import env_suffix, truthy


@pytest.mark.parametrize(
    "value,default,expected_result",
    [
        ("1", False, True),
        ("true", False, True),
        ("TRUE", False, True),
        ("0", True, False),
        ("no", True, False),
        ("", True, True),
        ("", False, False),
    ],
)
def test_truthy(value, default, expected_result):
    assert truthy(value, default) is expected_result


@pytest.mark.parametrize(
    "identifier,expected_result",
    [("ehr", "EHR"), ("ehr-main", "EHR_MAIN"), ("lab.feed_2", "LAB_FEED_2")],
)
def test_env_suffix(identifier, expected_result):
    assert env_suffix(identifier) == expected_result
