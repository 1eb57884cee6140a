"""
Driving runs from a configuration file
======================================

The same pipeline through the ``ekertqkd`` command, called in-process here.
"""

import tempfile
from pathlib import Path

from ekertqkd.cli import main

work = Path(tempfile.mkdtemp())
config = work / "lab.cfg"
config.write_text(
    "seed=7\n"
    "duration_s=600\n"
    "visibility=0.9388\n"
    "attack.mode=dephase\n"
    "attack.plane=A\n"
    "attack.fraction=0.3\n"
)

# %%
# keygen writes the keys, a report and the session log.
main(["keygen", "--config", str(config), "--out", str(work / "run")])
print(sorted(p.name for p in (work / "run").iterdir()))

# %%
# report rebuilds the numbers from the log alone.
main(["report", "--config", str(config), str(work / "run" / "session.log")])

# %%
main(["theory", "--mode", "dephase", "--plane", "B", "--angle", "30"])
