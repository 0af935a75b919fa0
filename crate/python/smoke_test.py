"""Smoke test for the pynurf extension: fit a 1-D bump with gradient-sampled
features, check a kernel value and run a tiny experiment."""

import json
import math

import pynurf


def main():
    names = [name for name, _ in pynurf.list_benchmarks()]
    assert "gauss1d" in names and "borehole" in names

    act = pynurf.Activation(s=1, delta=1 / 80)
    assert abs(act(0.0) - 0.5) < 1e-15

    train, val, test = pynurf.benchmark_data("gauss1d", 1, k=1000, seed=1)
    weights = pynurf.sample("local_gradient", train, 60, act, seed=2)
    assert len(weights) == 60
    model = pynurf.cross_validate(train, val, weights, act)
    pred = model.predict(test.x)
    rmse = math.sqrt(sum((p - y) ** 2 for p, y in zip(pred, test.y)) / len(pred))
    print(f"gauss1d, 60 gradient-sampled neurons: test RMSE {rmse:.4f}, alpha {model.alpha:.1e}")
    assert rmse < 0.1

    residual = pynurf.sample('{"kind":"residual","base":{"kind":"nonlocal_gradient","delta_w":0.025}}', train, 40, act, seed=3, val=val)
    assert len(residual) == 40

    ball = pynurf.Dataset([[0.0]], [0.0])
    value, stderr = pynurf.mc_kernel([0.5], [-0.5], ball, pynurf.Activation(1, 0.0), n_samples=200_000, seed=4)
    print(f"uniform Heaviside kernel k(0.5, -0.5) = {value:.4f} +- {stderr:.4f} (exact 0.25)")
    assert abs(value - 0.25) < 4 * stderr

    psi = pynurf.PsiTable(0, 3, 0.05)
    assert abs(psi.moment(2) + 1 / (4 * math.pi**2)) < 1e-6

    config = {
        "benchmark": "planar_wave",
        "d": 2,
        "k": 400,
        "replicates": 3,
        "samplers": [{"kind": "uniform"}, {"kind": "active_subspace"}],
        "n_grid": [20, 40],
        "seed": 5,
    }
    rows, summary = pynurf.run_experiment(json.dumps(config))
    assert len(rows) == 12 and all(r["status"] == "ok" for r in rows)
    for s in summary:
        print(f"planar_wave {s['sampler']:<16} N={s['N']:<3} median RMSE {s['median']:.4f}")
    print("smoke test passed")


if __name__ == "__main__":
    main()
