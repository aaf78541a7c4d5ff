import importlib.metadata

import egorax


def test_distribution_metadata():
    metadata = importlib.metadata.metadata("egorax")
    assert egorax.__version__ == metadata["Version"]
    assert metadata["Author"] == "The egorax developers"
    assert metadata.get("Author-email") is None
