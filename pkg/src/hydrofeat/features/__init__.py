from .correlation import (  # noqa: F401
    acf_suite,
    embed2_incircle,
    localsimple_tau,
    motiftwo_entro3,
    pacf_suite,
    spreadrandomlocal,
    trev_num,
    walker_propcross,
)
