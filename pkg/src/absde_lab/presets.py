"""Built-in experiment configurations, in the same text format as config files.

``violation`` was frozen after a fine-step deterministic solve (see
``absde_lab.deterministic``) showed ``min(Y1 - Y2) = -0.95`` near
``t = 0.51``: both generators decrease steeply in the anticipated value, so
the larger future value of ``Y1`` pulls its drift below that of ``Y2``.
"""
from .config import loads

_EXAMPLE = """
[problem]
T = 1.0
K = 0.5
h = 0.01
n_paths = 10000
seed = 1

[delay1]
kind = constant
c = 0.5

[generators]
f1 = {f1}
f2 = {f2}
f_tilde = CE(theta[1]+sin(theta[1]))

[terminal]
xi1 = {xi1}
xi2 = 0
"""

_PAPER_F1 = "CE(theta[1]+2*sin(theta[1])+1)"
_PAPER_F2 = "CE(theta[1]+cos(2*theta[1])-2)"

_VIOLATION = """
[problem]
T = 1.0
K = 0.5
h = 0.01
n_paths = 10000
seed = 1

[delay1]
kind = constant
c = 0.5

[generators]
f1 = CE(0 - 4*theta[1])
f2 = CE(0 - 4*theta[1]) - {shift}

[terminal]
xi1 = 2*(t - 1)
xi2 = 0
"""

_MONOTONE = """
[problem]
T = 1.0
K = 0.5
h = 0.01
n_paths = 2000
seed = 1

[delay1]
kind = constant
c = 0.5

[generators]
f1 = CE(theta[1])
f2 = CE(theta[1])

[terminal]
xi1 = 1
xi2 = 0
"""

PRESETS = {
    "paper-example": _EXAMPLE.format(f1=_PAPER_F1, f2=_PAPER_F2, xi1="1"),
    "paper-example-equal-terminal": _EXAMPLE.format(f1=_PAPER_F1, f2=_PAPER_F2, xi1="1").replace(
        "xi2 = 0", "xi2 = 1"
    ),
    "paper-example-swapped": _EXAMPLE.format(f1=_PAPER_F2, f2=_PAPER_F1, xi1="1"),
    "violation": _VIOLATION.format(shift="0.1"),
    "violation-restored": _VIOLATION.format(shift="10"),
    "monotone-pair": _MONOTONE,
}


def preset_text(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None


def load_preset(name):
    return loads(preset_text(name))
