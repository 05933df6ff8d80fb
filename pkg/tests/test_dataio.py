import hashlib
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esmgauntlet.dataio import (
    MAGIC, canonical_json, decode_dataset, encode_dataset, read_dataset, validate_metadata, write_dataset,
)
from esmgauntlet.errors import CorruptionError, FormatError, IntegrityError
from esmgauntlet.grid import Dataset, Field, GridSpec, Provenance


def _tiny():
    g = GridSpec.regular(2, 4)
    f = Field("t", ("lat", "lon"), np.arange(8.0).reshape(2, 4) + 0.1, "K", "air_temperature")
    return Dataset(g, [0.0], {"t": f}, provenance=Provenance(model_id="m"))


def _split(blob):
    hlen = int.from_bytes(blob[4:8], "little")
    return json.loads(blob[8:8 + hlen]), blob[8 + hlen:]


def test_roundtrip_tiny(tmp_path):
    ds = _tiny()
    path = tmp_path / "a.etc"
    n = write_dataset(ds, path)
    assert n == path.stat().st_size
    back = read_dataset(path)
    assert back == ds.with_content_hash()
    assert back["t"].data.tobytes() == ds["t"].data.tobytes()


def test_stream_roundtrip():
    buf = io.BytesIO()
    write_dataset(_tiny(), buf)
    buf.seek(0)
    assert read_dataset(buf) == _tiny().with_content_hash()


def test_empty_dataset_has_empty_payload_hash():
    ds = Dataset(GridSpec.regular(2, 4), [0.0], {})
    header, payload = _split(encode_dataset(ds))
    assert payload == b""
    assert header["provenance"]["content_hash"] == hashlib.sha256(b"").hexdigest()
    assert decode_dataset(encode_dataset(ds)).variables == {}


def test_payload_length_arithmetic():
    g = GridSpec.regular(64, 128)
    fields = {n: Field(n, ("time", "lat", "lon"), np.zeros((10, 64, 128))) for n in ("a", "b", "c")}
    blob = encode_dataset(Dataset(g, np.arange(10.0), fields))
    _, payload = _split(blob)
    assert len(payload) == 3 * 10 * 64 * 128 * 8


def test_header_is_canonical_json():
    blob = encode_dataset(_tiny())
    hlen = int.from_bytes(blob[4:8], "little")
    raw = blob[8:8 + hlen]
    assert raw == canonical_json(json.loads(raw))
    assert blob[:4] == MAGIC


def test_first_byte_flipped_is_format_error():
    blob = bytearray(encode_dataset(_tiny()))
    blob[0] ^= 0xFF
    with pytest.raises(FormatError):
        decode_dataset(bytes(blob))


def test_payload_byte_flipped_is_integrity_error():
    blob = bytearray(encode_dataset(_tiny()))
    blob[-3] ^= 0x01
    with pytest.raises(IntegrityError, match="hash"):
        decode_dataset(bytes(blob))


def test_truncation_is_corruption():
    blob = encode_dataset(_tiny())
    with pytest.raises(CorruptionError):
        decode_dataset(blob[:-8])
    with pytest.raises(CorruptionError):
        decode_dataset(blob + b"\0" * 8)


def test_annotation_edit_keeps_integrity():
    # the hash covers the payload only, so header edits do not invalidate data
    blob = encode_dataset(_tiny())
    header, payload = _split(blob)
    header["attrs"]["note"] = "edited"
    raw = canonical_json(header)
    back = decode_dataset(MAGIC + len(raw).to_bytes(4, "little") + raw + payload)
    assert back.attrs["note"] == "edited"


def test_metadata_profile():
    assert validate_metadata(_tiny()) == []
    ds = _tiny()
    bad = ds.with_variables(ds["t"].replace(units=""))
    v = validate_metadata(bad)
    assert len(v) == 1 and v[0].subject == "t" and v[0].key == "units"


def test_repeated_timestamp_flagged():
    g = GridSpec.regular(2, 4)
    f = Field("t", ("time", "lat", "lon"), np.zeros((3, 2, 4)), "K", "air_temperature")
    ds = Dataset(g, [0.0, 1.0, 1.0], {"t": f}, provenance=Provenance(model_id="m"))
    v = validate_metadata(ds)
    assert [(x.subject, x.key) for x in v] == [("time", "monotonic")]


def test_levels_must_decrease():
    g = GridSpec.regular(2, 4)
    f = Field("t", ("level", "lat", "lon"), np.zeros((2, 2, 4)), "K", "air_temperature")
    ds = Dataset(g, [0.0], {"t": f}, level_pa=[50000.0, 85000.0], provenance=Provenance(model_id="m"))
    assert [(x.subject, x.key) for x in validate_metadata(ds)] == [("level", "monotonic")]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 6), st.integers(4, 9), st.integers(1, 3), st.booleans())
def test_roundtrip_randomized(seed, nlat, nlon, ntime, masked):
    r = np.random.default_rng(seed)
    g = GridSpec.regular(nlat, nlon)
    data = r.standard_normal((ntime, nlat, nlon)) * 10.0 ** r.integers(-300, 300)
    if masked:
        data[0, 0, 0] = np.nan
    f = Field("x", ("time", "lat", "lon"), data, "1", maskable=masked)
    ds = Dataset(g, np.cumsum(r.random(ntime)), {"x": f}, attrs={"k": "v"})
    assert decode_dataset(encode_dataset(ds)) == ds.with_content_hash()
