"""Planning, simulation and evaluation toolkit for autonomous multi-scan
terrestrial laser scanning (TLS) of plot-based crop fields.

Pipeline stages:

* ``field_model``      -- digitize the field into voxelized plot boxes and
                          enumerate candidate scanner positions
* ``raycast``          -- slab-method ray casting and per-location visibility
* ``site_planning``    -- greedy selection of a covering scan-location set
* ``routing``          -- distance metrics, exact TSP, tour decomposition
* ``nav_sim``          -- pure-pursuit navigation simulation and error metrics
* ``registration``     -- synthetic scans, rigid registration, quality metrics
* ``cli``              -- ``tls-planner plan|route|simulate|evaluate``
"""

__version__ = "0.1.0"
