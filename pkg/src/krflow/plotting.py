"""Figures rendered next to the CSV outputs (Agg backend, no display needed)."""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 150,
}
KIND_STYLE = {"pef": ("C0", "o"), "usf": ("C1", "s"), "bsf": ("C2", "^"), "mixed": ("C3", "v"),
              "shear": ("C4", "D")}


def _size(scale=1.0, ratio=None):
    width = 5.0 * scale
    ratio = (np.sqrt(5.0) - 1.0) / 2.0 if ratio is None else ratio
    return width, width * ratio


def _plane_basis():
    # orthonormal basis of the mean-zero plane {x : x1 + x2 + x3 = 0}
    e1 = np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)
    e2 = np.array([1.0, 1.0, -2.0]) / np.sqrt(6.0)
    return np.vstack([e1, e2])


def plot_stretch_trace(eps_tilde, omega1, omega2, path, title=None):
    """Reduced stretch trajectory inside the unit parallelogram of the stretch plane."""
    E = _plane_basis()
    corners = np.array([s1 * omega1 + s2 * omega2
                        for s1, s2 in ((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5))])
    pc = corners @ E.T
    pts = np.asarray(eps_tilde, dtype=float).reshape(-1, 3) @ E.T
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size(0.9, 1.0))
        ax.plot(pc[:, 0], pc[:, 1], color="0.3", lw=1.0)
        ax.plot(pts[:, 0], pts[:, 1], ".", ms=1.5, color="C0")
        for w, name in ((omega1, r"$\hat\omega_1/2$"), (omega2, r"$\hat\omega_2/2$")):
            x, y = 0.5 * w @ E.T
            ax.annotate("", xy=(x, y), xytext=(0, 0), arrowprops={"arrowstyle": "->", "color": "0.4"})
            ax.text(0.55 * x, 0.55 * y + 0.05, name, color="0.2")
        ax.set_aspect("equal")
        ax.set_xlabel(r"$(\tilde\varepsilon_1 - \tilde\varepsilon_2)/\sqrt{2}$")
        ax.set_ylabel(r"$(\tilde\varepsilon_1 + \tilde\varepsilon_2 - 2\tilde\varepsilon_3)/\sqrt{6}$")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def _by_kind(rows):
    out = {}
    for r in rows:
        out.setdefault(r["kind"], []).append(r)
    for k in out:
        out[k].sort(key=lambda r: r["eps"])
    return out


def plot_pressures(rows, path):
    """Extensional and contractional pressure against strain rate, one panel each."""
    groups = _by_kind(rows)
    eq = groups.pop("eq", None)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=_size(1.6, 0.4))
        for ax, chan, label in ((axes[0], "P_ext", "extensional pressure"),
                                (axes[1], "P_con", "contractional pressure")):
            for kind, rs in groups.items():
                color, marker = KIND_STYLE.get(kind, ("k", "o"))
                x = [r["eps"] for r in rs]
                ax.errorbar(x, [r[chan] for r in rs], yerr=[r[chan + "_SE"] for r in rs],
                            color=color, marker=marker, ms=3, lw=0.8, capsize=2, label=kind.upper())
            if eq:
                ax.axhline(eq[0][chan], color="0.5", ls="--", lw=0.8, label="equilibrium")
            ax.set_xlabel(r"$\varepsilon$")
            ax.set_ylabel(label)
        axes[0].legend(frameon=False, loc="lower left")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_viscosity(rows, path):
    """Generalized viscosity against the square root of the strain rate."""
    groups = _by_kind(rows)
    groups.pop("eq", None)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=_size(0.9))
        for kind, rs in groups.items():
            color, marker = KIND_STYLE.get(kind, ("k", "o"))
            ax.errorbar([r["sqrt_eps"] for r in rs], [r["eta"] for r in rs],
                        yerr=[r["eta_SE"] for r in rs], color=color, marker=marker, ms=3, lw=0.8,
                        capsize=2, label=kind.upper())
        ax.set_xlabel(r"$\sqrt{\varepsilon}$")
        ax.set_ylabel(r"$\eta$")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
