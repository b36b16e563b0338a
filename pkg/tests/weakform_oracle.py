"""Independent route: evaluate the published weak-term and constraint strings literally.

Each string is turned into a Python expression and evaluated with the trial
and test quantities bound to shape-function values at the quadrature points.
Nothing here shares code with wgfem.assembly.
"""
import re

import numpy as np

LAPLACIAN_ANISO = (
    "((eperp1*(test(Hazi)*Hazi-M*(test(Hazi)*Hrad+Hazi*test(Hrad))+M^2*test(Hrad)*Hrad)"
    "+epara1*M^2*test(Haxi)*Haxi)/x"
    "+eperp1*(test(Hazix)*(Hazi-M*Hrad)+Hazix*(test(Hazi)-M*test(Hrad)))"
    "-epara1*M*(test(Haxi)*Haziy+Haxi*test(Haziy))"
    "+x*(eperp1*test(Hazix)*Hazix+epara1*((test(Haxix)-test(Hrady))*(Haxix-Hrady)+Haziy*test(Haziy)))"
    ")/(epara1*eperp1)"
)
LAPLACIAN_ISO = (
    "((test(Hazi)*Hazi-M*(test(Hazi)*Hrad+Hazi*test(Hrad))+M^2*(test(Hrad)*Hrad+test(Haxi)*Haxi))/x"
    "+(test(Hazix)*(Hazi-M*Hrad)+Hazix*(test(Hazi)-M*test(Hrad)))"
    "-M*(test(Haxi)*Haziy+Haxi*test(Haziy))"
    "+x*(test(Hazix)*Hazix+((test(Haxix)-test(Hrady))*(Haxix-Hrady)+Haziy*test(Haziy))))/e1"
)
PENALTY = (
    "alpha*((test(Hrad)*Hrad-M*(test(Hazi)*Hrad+Hazi*test(Hrad))+M^2*test(Hazi)*Hazi)/x"
    "+(test(Haxiy)+test(Hradx))*(Hrad-M*Hazi)+(test(Hrad)-M*test(Hazi))*(Hradx+Haxiy)"
    "+x*(test(Hradx)+test(Haxiy))*(Hradx+Haxiy))"
)
DWEAK = "x*(Haxi*test(Haxi)+Hazi*test(Hazi)+Hrad*test(Hrad))"

EW_NORMAL = "Hrad*nx+Haxi*ny"
EW_CURL = "-Haxix+Hrady"
EW_TANGENTIAL = "(Hazi*nx-Hrad*M*nx-Haxi*M*ny+Hazix*nx*x+Haziy*ny*x)/x"
MW_TANGENTIAL = "Haxi*nx-Hrad*ny"
MW_AZI = "Hazi"
MW_NORMAL_D = "(Haxi*M*nx+Hazi*ny-Hrad*M*ny-Haziy*nx*x+Hazix*ny*x)/x"
RM1 = "-i*cMW*Hazi*cbar*mf+cEW*(Hazi*nx-Hrad*M*nx-Haxi*M*ny+Hazix*nx*x+Haziy*ny*x)/x"
RM2 = "-i*cEW*(-Haxix+Hrady)+cMW*cbar*mf*(Haxi*nx-Hrad*ny)"
RM3 = "tngM*cbar*mf*(Hrad*nx+Haxi*ny)-tngE*(Haxi*M*nx+Hazi*ny-Hrad*M*ny-Haziy*nx*x+Hazix*ny*x)/x"

NAMES = ("Hrad", "Hazi", "Haxi")
COMP = {"Hrad": 0, "Hazi": 1, "Haxi": 2}
QUANTITIES = ("Hrad", "Hazi", "Haxi", "Hradx", "Hazix", "Haxix", "Hrady", "Haziy", "Haxiy")


def _pythonize(expr: str) -> str:
    expr = expr.replace("^", "**")
    expr = re.sub(r"test\((\w+)\)", r"test_\1", expr)
    return re.sub(r"(?<![\w.])i(?![\w])", "1j", expr)


def element_matrix(expr, N, dNx, dNy, x, w, **consts):
    """Local matrix A[(a, c), (b, d)] = sum_q w * expr(test = N_a e_c, trial = N_b e_d)."""
    code = compile(_pythonize(expr), "<weak>", "eval")
    nn = N.shape[1]
    A = np.zeros((nn * 3, nn * 3))
    zero = np.zeros_like(x)

    def fields(a, c, prefix):
        out = {}
        for name, k in COMP.items():
            on = k == c
            out[prefix + name] = N[:, a] if on else zero
            out[prefix + name + "x"] = dNx[:, a] if on else zero
            out[prefix + name + "y"] = dNy[:, a] if on else zero
        return out

    for a in range(nn):
        for c in range(3):
            tf = fields(a, c, "test_")
            for b in range(nn):
                for d in range(3):
                    env = dict(consts, x=x, **tf, **fields(b, d, ""))
                    A[3 * a + c, 3 * b + d] = np.sum(w * eval(code, {}, env))
    return A


def constraint_coefficients(expr, **consts):
    """Coefficient of each of the nine field quantities in a linear constraint string."""
    code = compile(_pythonize(expr), "<contr>", "eval")
    out = np.zeros(len(QUANTITIES), dtype=complex)
    for k, q in enumerate(QUANTITIES):
        env = dict(consts, **{name: 0.0 for name in QUANTITIES})
        env[q] = 1.0
        out[k] = eval(code, {}, env)
    return out
