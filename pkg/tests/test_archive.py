import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semibayes.archive import MAGIC, DrawArchive, canonical_json, config_hash
from semibayes.errors import InputError
from semibayes.transform import MonotoneMap


def make_archive(rng, S=5):
    arc = DrawArchive("sblm", 42, {"psi": 3.0, "draws": S}, n=10, d=2)
    arc.arrays.update(theta=rng.normal(size=(S, 3)), sigma=rng.uniform(size=S), predictive=rng.normal(size=(S, 4)))
    gs = []
    for s in range(S):
        t = np.sort(rng.normal(size=3 + s))
        gs.append(MonotoneMap(t, np.cumsum(rng.uniform(0.1, 1, t.size))))
    arc.set_transforms(gs)
    return arc, gs


class TestRoundTrip:
    def test_bitwise(self, rng, tmp_path):
        arc, gs = make_archive(rng)
        back = DrawArchive.read(arc.write(tmp_path / "a.sbd"))
        assert back.model == "sblm" and back.seed == 42 and (back.n, back.d, back.S) == (10, 2, 5)
        assert set(back.arrays) == set(arc.arrays)
        for k, v in arc.arrays.items():
            assert back.arrays[k].tobytes() == np.asarray(v, dtype=back.arrays[k].dtype).tobytes()
        for g, h in zip(gs, back.transforms()):
            np.testing.assert_array_equal(g.knots_g, h.knots_g)
            np.testing.assert_array_equal(g.slopes, h.slopes)
            x = np.linspace(g.knots_t[0], g.knots_t[-1], 50)
            np.testing.assert_array_equal(g(x), h(x))

    def test_deterministic_bytes(self, rng):
        arc, _ = make_archive(np.random.default_rng(3))
        again, _ = make_archive(np.random.default_rng(3))
        assert arc.to_bytes() == again.to_bytes()
        assert arc.to_bytes().startswith(MAGIC)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=0, max_size=40))
    def test_property_roundtrip(self, values):
        arc = DrawArchive("sbgp", 1, {}, {"predictive": np.array(values).reshape(-1, 1)})
        back = DrawArchive.from_bytes(arc.to_bytes())
        assert back.arrays["predictive"].tobytes() == arc.arrays["predictive"].tobytes()

    def test_csv_export(self, rng):
        arc, _ = make_archive(rng)
        lines = arc.to_csv("theta").strip().split("\n")
        assert len(lines) == 5
        np.testing.assert_array_equal(np.array([l.split(",") for l in lines], dtype=float), arc.arrays["theta"])


class TestCorruption:
    def test_bad_magic(self):
        with pytest.raises(InputError):
            DrawArchive.from_bytes(b"NOTDRAWS" + bytes(10))

    def test_truncated(self, rng):
        data = make_archive(rng)[0].to_bytes()
        with pytest.raises(InputError):
            DrawArchive.from_bytes(data[:-8])
        with pytest.raises(InputError):
            DrawArchive.from_bytes(data + b"\0")

    def test_tampered_config(self, rng):
        data = make_archive(rng)[0].to_bytes()
        with pytest.raises(InputError, match="hash"):
            DrawArchive.from_bytes(data.replace(b'"psi":3.0', b'"psi":4.0'))


class TestConfigHash:
    def test_formatting_insensitive(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
        assert canonical_json({"b": 1.5, "a": None}) == '{"a":null,"b":1.5}'

    def test_sensitive_to_values(self):
        base = {"psi": 3.0, "draws": 10, "approx": "laplace"}
        for key, val in [("psi", 3.5), ("draws", 11), ("approx", "prior")]:
            assert config_hash({**base, key: val}) != config_hash(base)
        assert config_hash({**base, "extra": True}) != config_hash(base)
