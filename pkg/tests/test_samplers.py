import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hyq.errors import BackendError, CapacityError, DimensionError
from hyq.qubo import QuboModel
from hyq.samplers import (REMOTE_URL_ENV, BruteForceSampler, RemoteSampler, SamplerConfig, TabuSampler,
                          brute_force, get_backend, simulated_anneal, tabu_search)

from conftest import all_states, models, random_model, two_bead_two_site


def test_brute_force_single_variable():
    x, e = brute_force(QuboModel.from_terms(1, {0: -1})).first
    assert list(x) == [1] and e == -1.0


def test_brute_force_two_beads_two_sites():
    ss = brute_force(two_bead_two_site(10.0))
    x, e = ss.first
    assert e == pytest.approx(0.0)
    grounds = {tuple(s) for s, en, _ in ss if abs(en) < 1e-9}
    assert grounds == {(1, 0, 0, 1), (0, 1, 1, 0)}


def test_brute_force_cap():
    with pytest.raises(CapacityError):
        brute_force(QuboModel(25))
    with pytest.raises(CapacityError):
        brute_force(QuboModel(5), cap=4)


def test_brute_force_zero_vars():
    x, e = brute_force(QuboModel(0, offset=2.5)).first
    assert len(x) == 0 and e == 2.5


@given(models(max_vars=10))
def test_brute_force_matches_table(m):
    x, e = brute_force(m).first
    assert e == pytest.approx(m.energies(all_states(m.num_vars)).min(), abs=1e-9)
    assert m.energy(x) == pytest.approx(e)


def test_brute_force_keeps_lowest_sorted(rng):
    m = random_model(rng, 12)
    ss = brute_force(m, keep=50)
    table = np.sort(m.energies(all_states(12)))[:50]
    assert np.allclose(ss.energies, table)


def test_brute_force_below_every_annealed_sample(rng):
    m = random_model(rng, 12)
    _, e = brute_force(m).first
    sa = simulated_anneal(m, SamplerConfig(num_reads=100, sa_sweeps=200))
    assert np.all(sa.energies >= e - 1e-9)


def test_annealing_finds_unique_ground_state():
    # the unique-ground-state model is fixed; vary the seed
    rng = np.random.default_rng(7)
    while True:
        m = random_model(rng, 8)
        e = np.sort(m.energies(all_states(8)))
        if e[1] - e[0] > 1e-6:
            break
    ground, _ = brute_force(m).first
    hits = sum(np.array_equal(simulated_anneal(m, SamplerConfig(num_reads=10, seed=s)).first[0], ground)
               for s in range(100))
    assert hits >= 95


def test_annealing_zero_model():
    ss = simulated_anneal(QuboModel(3), SamplerConfig(num_reads=5, sa_sweeps=10))
    assert np.all(ss.energies == 0.0)


def test_annealing_is_deterministic(rng):
    m = random_model(rng, 10)
    cfg = SamplerConfig(num_reads=20, sa_sweeps=50, seed=99)
    a, b = simulated_anneal(m, cfg), simulated_anneal(m, cfg)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.counts, b.counts)


def test_config_validation_and_derive():
    with pytest.raises(ValueError):
        SamplerConfig(num_reads=0)
    with pytest.raises(ValueError):
        SamplerConfig(sa_beta_initial=5, sa_beta_final=1)
    cfg = SamplerConfig(seed=3)
    assert cfg.derive(1).seed == cfg.derive(1).seed != cfg.derive(2).seed


def test_tabu_keeps_optimal_initial():
    m = QuboModel.from_terms(2, {0: -1, 1: -1}, {(0, 1): 3})
    x, e = tabu_search(m, SamplerConfig(), [1, 0]).first
    assert list(x) == [1, 0] and e == -1.0


def test_tabu_escapes_from_both_on():
    m = QuboModel.from_terms(2, {0: -1, 1: -1}, {(0, 1): 3})
    x, e = tabu_search(m, SamplerConfig(), [1, 1]).first
    assert e == -1.0 and tuple(x) in {(1, 0), (0, 1)}


def test_tabu_length_mismatch():
    with pytest.raises(DimensionError):
        tabu_search(QuboModel(3), SamplerConfig(), [0, 1])


def test_tabu_never_worse_than_initial(rng):
    cfg = SamplerConfig(tabu_max_no_improve=20)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        m = random_model(rng, n)
        x0 = rng.integers(0, 2, n).astype(np.int8)
        _, e = tabu_search(m, cfg, x0).first
        assert e <= m.energy(x0) + 1e-9


@given(models(max_vars=10), st.integers(0, 2**32 - 1))
def test_tabu_sampler_reports_true_energies(m, seed):
    ss = TabuSampler(restarts=4).sample(m, SamplerConfig(seed=seed))
    assert np.allclose(ss.energies, m.energies(ss.states))


def test_get_backend_names():
    assert isinstance(get_backend("bruteforce"), BruteForceSampler)
    with pytest.raises(ValueError):
        get_backend("quantum")


class _Handler(BaseHTTPRequestHandler):
    mode = "ok"

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        if self.mode == "fail":
            self.send_response(500)
            self.end_headers()
            return
        m = QuboModel.from_json(body["qubo"])
        x, e = brute_force(m).first
        reply = {"samples": [{"bits": x.tolist(), "energy": 1e9, "multiplicity": 3}]}
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_port}/sample"
    srv.shutdown()
    _Handler.mode = "ok"


def test_remote_sampler_round_trip(server, rng):
    m = random_model(rng, 6)
    ss = RemoteSampler(server).sample(m, SamplerConfig())
    x, e = ss.first
    # the reply's energy is ignored and recomputed
    assert e == pytest.approx(m.energy(x))
    assert e == pytest.approx(brute_force(m).first[1])
    assert int(ss.counts[0]) == 3


def test_remote_sampler_from_environment(server, monkeypatch):
    monkeypatch.setenv(REMOTE_URL_ENV, server)
    assert get_backend("remote").url == server
    monkeypatch.delenv(REMOTE_URL_ENV)
    with pytest.raises(BackendError):
        RemoteSampler()


def test_remote_sampler_http_error(server):
    _Handler.mode = "fail"
    with pytest.raises(BackendError):
        RemoteSampler(server).sample(QuboModel(2))


def test_remote_sampler_unreachable():
    with pytest.raises(BackendError):
        RemoteSampler("http://127.0.0.1:9/none", timeout=2).sample(QuboModel(2))
