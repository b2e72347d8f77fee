import gzip
import struct

import numpy as np
import pytest

from lassoviz.data import DataFormatError, LabeledDataset, parse_idx, read_idx_images, read_idx_labels


def write_idx(tmp_path, images, labels, gz=False):
    n, h, w = images.shape
    ib = struct.pack(">IIII", 0x803, n, h, w) + images.astype(np.uint8).tobytes()
    lb = struct.pack(">II", 0x801, len(labels)) + np.asarray(labels, np.uint8).tobytes()
    op = gzip.open if gz else open
    ip, lp = tmp_path / ("i.gz" if gz else "i"), tmp_path / ("l.gz" if gz else "l")
    with op(ip, "wb") as fh:
        fh.write(ib)
    with op(lp, "wb") as fh:
        fh.write(lb)
    return ip, lp


@pytest.mark.parametrize("gz", [False, True])
def test_parse_idx_scales_pixels(tmp_path, gz):
    imgs = np.zeros((3, 4, 5), np.uint8)
    imgs[0, 0, 0] = 255
    ip, lp = write_idx(tmp_path, imgs, [7, 1, 0], gz)
    ds = parse_idx(ip, lp)
    assert ds.images.shape == (3, 1, 4, 5)
    assert ds.images[0, 0, 0, 0] == 1.0 and ds.images[1].max() == 0.0
    assert ds.labels.tolist() == [7, 1, 0]


def test_idx_errors_carry_offsets(tmp_path):
    imgs = np.ones((2, 3, 3), np.uint8)
    ip, lp = write_idx(tmp_path, imgs, [1, 2])
    data = ip.read_bytes()
    ip.write_bytes(data[:-4])
    with pytest.raises(DataFormatError, match="offset 30: expected 34 bytes"):
        read_idx_images(ip)
    ip.write_bytes(struct.pack(">I", 0x801) + data[4:])
    with pytest.raises(DataFormatError, match="offset 0"):
        read_idx_images(ip)
    ip.write_bytes(data)
    lp.write_bytes(struct.pack(">II", 0x801, 3) + b"\x01\x02\x03")
    with pytest.raises(DataFormatError, match="agree|counts|3"):
        parse_idx(ip, lp)
    assert read_idx_labels(lp).tolist() == [1, 2, 3]


def test_labeled_dataset_split_and_checks():
    x = np.zeros((6, 1, 2, 2), np.float32)
    ds = LabeledDataset(x, [0, 1, 0, 1, 0, 1], ["a", "b"], folds=np.array([0, 1, 2, 0, 1, 2]))
    tr, te = ds.split(1)
    assert len(tr) == 4 and len(te) == 2
    with pytest.raises(DataFormatError):
        LabeledDataset(x, [0, 1, 2, 0, 0, 0], ["a", "b"])
    with pytest.raises(DataFormatError):
        LabeledDataset(x[:2], [0, 1], ["a", "b"]).split(0)
