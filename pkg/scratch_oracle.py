"""Dev scratch: tiny-case grid oracle vs Gibbs E-step moments (chunked)."""
import numpy as np
from scipy.stats import gamma as gamma_dist
import skewfield as sf


def tiny_setup():
    lay = sf.SpatialLayout(sites=[[0.0, 20.0], [3.0, 21.0]], region_of=[0, 1])
    params = sf.SktParams(
        regions=[
            sf.RegionParams(delta=[0.6], zeta=[0.4], nu=3.0, psi=np.eye(1)),
            sf.RegionParams(delta=[-0.4], zeta=[0.5], nu=5.0, psi=np.eye(1)),
        ],
        sigma=np.array([[1.0, 0.7], [0.7, 1.0]]),
    )
    y = np.array([[0.9, -0.5]])
    return lay, params, sf.Dataset(y=y, layout=lay)


def trap_w(x):
    w = np.zeros_like(x)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[0] = 0.5 * (x[1] - x[0])
    w[-1] = 0.5 * (x[-1] - x[-2])
    return w


def oracle_moments(params, y, nz=72, nu_grid=56):
    zeta = np.array([r.zeta[0] for r in params.regions])
    delta = np.array([r.delta[0] for r in params.regions])
    nus = np.array([r.nu for r in params.regions])
    sig = params.sigma
    lam = np.linalg.inv(sig)
    ups = (1 - zeta**2) * (1 - delta**2)
    md = np.sqrt(1 - zeta**2) * delta

    zg = np.geomspace(1e-3, 40.0, nz)
    ug = np.linspace(0.0, 6.0, nu_grid)
    wz, wu = trap_w(zg), trap_w(ug)

    gz1 = gamma_dist.pdf(zg, nus[0] / 2, scale=2 / nus[0])
    gz2 = gamma_dist.pdf(zg, nus[1] / 2, scale=2 / nus[1])
    hu = 2.0 * np.exp(-0.5 * ug**2) / np.sqrt(2 * np.pi)

    keys = ["z", "log_z", "z_eta0", "z_eta1", "z_eta0_sq", "z_eta1_sq", "z_eta0_eta1"]
    sums = {k: np.zeros(2) for k in keys}
    sums["outer01"] = 0.0
    w_total = 0.0

    # loop over Z1; arrays inside are (nz2, nu1, nu2)
    Z2, U1, U2 = np.meshgrid(zg, ug, ug, indexing="ij")
    for i, z1 in enumerate(zg):
        base_w = (wz[i] * gz1[i]) * (
            (wz * gz2)[:, None, None] * (wu * hu)[None, :, None] * (wu * hu)[None, None, :]
        )
        eta1_1 = U1 / np.sqrt(z1)
        eta1_2 = U2 / np.sqrt(Z2)
        r1 = y[0] - md[0] * eta1_1
        r2 = y[1] - md[1] * eta1_2
        c11 = (ups[0] + zeta[0] ** 2 * sig[0, 0]) / z1
        c22 = (ups[1] + zeta[1] ** 2 * sig[1, 1]) / Z2
        c12 = zeta[0] * zeta[1] * sig[0, 1] / np.sqrt(z1 * Z2)
        det = c11 * c22 - c12**2
        quad = (c22 * r1**2 - 2 * c12 * r1 * r2 + c11 * r2**2) / det
        like = np.exp(-0.5 * quad) / (2 * np.pi * np.sqrt(det))
        w = base_w * like
        w_total += w.sum()

        l11 = zeta[0] ** 2 * z1 / ups[0] + z1 * lam[0, 0]
        l22 = zeta[1] ** 2 * Z2 / ups[1] + Z2 * lam[1, 1]
        l12 = np.sqrt(z1 * Z2) * lam[0, 1]
        pdet = l11 * l22 - l12**2
        v11 = l22 / pdet
        v22 = l11 / pdet
        v12 = -l12 / pdet
        b1 = zeta[0] * z1 * r1 / ups[0]
        b2 = zeta[1] * Z2 * r2 / ups[1]
        mu1 = v11 * b1 + v12 * b2
        mu2 = v12 * b1 + v22 * b2

        def acc(key, f1, f2):
            sums[key][0] += (w * f1).sum()
            sums[key][1] += (w * f2).sum()

        acc("z", z1, Z2)
        acc("log_z", np.log(z1), np.log(Z2))
        acc("z_eta0", z1 * mu1, Z2 * mu2)
        acc("z_eta1", z1 * eta1_1, Z2 * eta1_2)
        acc("z_eta0_sq", z1 * (v11 + mu1**2), Z2 * (v22 + mu2**2))
        acc("z_eta1_sq", z1 * eta1_1**2, Z2 * eta1_2**2)
        acc("z_eta0_eta1", z1 * mu1 * eta1_1, Z2 * mu2 * eta1_2)
        sums["outer01"] += (w * np.sqrt(z1 * Z2) * (v12 + mu1 * mu2)).sum()

    out = {k: sums[k] / w_total for k in keys}
    out["outer01"] = sums["outer01"] / w_total
    return out


def main():
    lay, params, data = tiny_setup()
    ora = oracle_moments(params, data.y[0])
    ora2 = oracle_moments(params, data.y[0], nz=96, nu_grid=72)
    for k in ("z", "log_z", "z_eta0", "z_eta1", "z_eta0_sq", "z_eta1_sq", "z_eta0_eta1"):
        print(f"oracle {k}: {ora[k]}  refined: {ora2[k]}")
    print("oracle outer01", ora["outer01"], "refined", ora2["outer01"])

    mom = sf.gibbs_estep(data, params, 50_000, seed=42)
    print("\ngibbs vs oracle (refined):")
    for k in ("z", "log_z", "z_eta0", "z_eta1", "z_eta0_sq", "z_eta1_sq", "z_eta0_eta1"):
        g = getattr(mom, k)[0]
        o = ora2[k]
        rel = np.abs(g - o) / np.maximum(np.abs(o), 0.1)
        print(f"{k:>12}: gibbs {g} oracle {o} reldiff {rel}")
    g01 = mom.eta0_scaled_outer[0, 0, 1]
    print("outer01: gibbs", g01, "oracle", ora2["outer01"],
          "reldiff", abs(g01 - ora2["outer01"]) / max(abs(ora2["outer01"]), 0.1))


if __name__ == "__main__":
    main()
