import json
import sys
from pathlib import Path

import pytest

from egohand.pipeline import HandDetector, PipelineConfig, load_manifest, train_hand_from_records
from egohand.skin import train_skin_model
from egohand.synthetic import make_dataset

sys.path.insert(0, str(Path(__file__).parent))

from synthdata import write_synthetic_set  # noqa: E402


@pytest.fixture(scope="session")
def small_models(tmp_path_factory):
    """Skin model and baseline classifier trained on a few synthetic frames."""
    root = tmp_path_factory.mktemp("models")
    train = make_dataset(100, 12)
    skin = train_skin_model(
        [f.image for f in train], [f.mask for f in train], seed=0, n_trees=6, max_depth=10, samples_per_frame=1500
    )
    skin.save(root / "skin.json")
    cfg = PipelineConfig(skin_model=str(root / "skin.json"))
    manifest, _ = write_synthetic_set(root / "train", 101, 30)
    res = train_hand_from_records(HandDetector(skin, None, cfg), load_manifest(manifest), epochs=15, seed=0)
    res.classifier.save(root / "hand.json")
    config = {"skin_model": "skin.json", "classifier": {"baseline": "hand.json"}, "workers": 2}
    (root / "config.json").write_text(json.dumps(config))
    return root


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
