import importlib.util
import os
import sys
from pathlib import Path

# When run from ctest, import the freshly built package rather than any installed copy.
_stage = os.environ.get("MLH_PYTHON_STAGE_DIR")
if _stage:
    pkg = Path(_stage) / "mlharness"
    spec = importlib.util.spec_from_file_location(
        "mlharness", pkg / "__init__.py", submodule_search_locations=[str(pkg)]
    )
    core_path = next(pkg.glob("_core*.so"))
    core_spec = importlib.util.spec_from_file_location("mlharness._core", core_path)
    core = importlib.util.module_from_spec(core_spec)
    sys.modules["mlharness._core"] = core
    core_spec.loader.exec_module(core)
    module = importlib.util.module_from_spec(spec)
    sys.modules["mlharness"] = module
    spec.loader.exec_module(module)
