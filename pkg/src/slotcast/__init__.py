# vim: set ts=4 sts=0 sw=4 si fenc=utf-8 et:
# vim: set fdm=marker fmr={{{,}}} fdl=0 foldcolumn=4:
# Authors:     BP
# =========================================
"""pre-execution slot-time prediction for warehouse queries"""

__version__ = "0.1.0"

# done.
