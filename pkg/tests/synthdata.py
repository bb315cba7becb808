from pathlib import Path

from egohand.evaluation import SETTINGS
from egohand.pipeline import FrameRecord, write_manifest
from egohand.raster import write_image, write_mask
from egohand.synthetic import make_dataset


def write_synthetic_set(root, seed, n, **kw):
    """Write ``n`` synthetic frames plus masks and return the manifest path."""
    root = Path(root)
    frames = make_dataset(seed, n, **kw)
    records = []
    for i, f in enumerate(frames):
        stem = f"frame_{i:04d}"
        write_image(root / "frames" / f"{stem}.png", f.image)
        write_mask(root / "frames" / f"{stem}_mask.png", f.mask)
        records.append(FrameRecord(stem, str(root / "frames" / f"{stem}.png"), None, f.boxes, SETTINGS[i % 5], f.hands_present))
    write_manifest(root / "manifest.jsonl", records)
    return root / "manifest.jsonl", frames
