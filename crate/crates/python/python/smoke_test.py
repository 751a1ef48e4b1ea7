# Copyright 2026 optomech contributors
# SPDX-License-Identifier: Apache-2.0
"""Smoke test for the optomech extension module."""

import math
import tempfile

import optomech


def test_presets():
    names = optomech.preset_names()
    assert "fock2" in names and "bell_phi_plus" in names
    text = optomech.preset_toml("fock2")
    assert "g0 = 0.839" in text


def test_coefficient_limits():
    assert optomech.displaced_fock_coeff(1, 3, 3, 0.0) == 1.0
    assert optomech.displaced_fock_coeff(0, 3, 3, 0.7) == 0.0
    assert abs(optomech.displaced_fock_coeff(1, 0, 0, 0.5) - math.exp(-0.125)) < 1e-12


def test_environment_episode():
    env = optomech.Environment(preset="fock2")
    obs = env.reset()
    assert len(obs) == env.obs_dim == 2 * 30 * 30
    assert env.action_dim == 2
    done = False
    steps = 0
    while not done:
        obs, reward, fidelity, done = env.step([env.omega_max, -env.omega_max])
        assert 0.0 <= fidelity <= 1.0
        assert reward >= 0.0
        steps += 1
    assert steps == env.steps == 50
    fids = optomech.replay(env.schedule, preset="fock2")
    assert len(fids) == 51
    assert abs(fids[-1] - env.fidelity) < 1e-12
    re, im = optomech.mechanical_state(obs, preset="fock2")
    assert abs(sum(re[i][i] for i in range(10)) - 1.0) < 1e-6


def test_diagnostics():
    vac = [[1.0 if (i, j) == (0, 0) else 0.0 for j in range(4)] for i in range(4)]
    zeros = [[0.0] * 4 for _ in range(4)]
    axis, w = optomech.wigner(vac, zeros, extent=1.0, points=3)
    assert axis == [-1.0, 0.0, 1.0]
    assert abs(w[1][1] - 2.0 / math.pi) < 1e-12
    phi = [[0.0] * 4 for _ in range(4)]
    for i in (0, 3):
        for j in (0, 3):
            phi[i][j] = 0.5
    assert abs(optomech.log_negativity(phi, zeros, (2, 2)) - 1.0) < 1e-10


def test_errors_and_training():
    try:
        optomech.Environment(toml='[system]\nkind = "single"\nkappa = -1.0\n[target]\nstate = "fock"\nn = 2\n')
    except ValueError as e:
        assert "kappa" in str(e)
    else:
        raise AssertionError("negative kappa accepted")
    toml = (
        '[system]\nkind = "single"\ncavity_dim = 2\nmech_dim = 4\n'
        '[target]\nstate = "fock"\nn = 2\n'
        "[schedule]\ntotal_time = 4.0\nsteps = 4\n"
        "[rl]\nepochs = 2\nwarmup_epochs = 1\nbatch_size = 4\nhidden = [8]\ncheckpoint_every = 0\n"
    )
    with tempfile.TemporaryDirectory() as d:
        best, epoch, run, sched = optomech.train(toml=toml, out=d)
        assert run == 2 and 0.0 <= best <= 1.0 and len(sched) == 4


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"{name} ok")
