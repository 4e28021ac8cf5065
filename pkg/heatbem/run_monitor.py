import json
import logging
import time
from pathlib import Path
from typing import Any, Dict, List


class _WarningCollector(logging.Handler):
    def __init__(self, sink: List[str]):
        super().__init__(level=logging.WARNING)
        self.sink = sink

    def emit(self, record: logging.LogRecord) -> None:
        self.sink.append(f"{record.name}: {record.getMessage()}")


class RunMonitor:
    def __init__(self, command: str):
        self.command = command
        self.started = time.time()
        self.phases: Dict[str, float] = {}
        self.counters: Dict[str, int] = {}
        self.levels: List[Dict[str, Any]] = []
        self.excluded_points: List[str] = []
        self.warnings: List[str] = []
        self._collector = _WarningCollector(self.warnings)
        self._logger = logging.getLogger("heatbem")

    def __enter__(self):
        self._logger.addHandler(self._collector)
        return self

    def __exit__(self, exc_type, exc, tb):
        self._logger.removeHandler(self._collector)
        return False

    def phase(self, name: str):
        monitor = self

        class _Phase:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, *exc):
                monitor.phases[name] = monitor.phases.get(name, 0.0) + time.perf_counter() - self.start
                return False

        return _Phase()

    def count(self, name: str, amount: int = 1) -> None:
        self.counters[name] = self.counters.get(name, 0) + amount

    def record_level(self, result) -> None:
        """Log one refinement level of a convergence study"""
        self.levels.append({
            'level': result.level,
            'k': result.k,
            'h': result.h,
            'n_steps': result.n_steps,
            'n_panels': result.n_panels,
            'E_phi': result.errors.e_phi,
            'E_lambda_0': result.errors.e_lambda_0,
            'E_lambda_mhalf': result.errors.e_lambda_mhalf,
        })

    def record_excluded(self, reasons: List[str]) -> None:
        self.excluded_points.extend(reasons)
        self.count('excluded_points', len(reasons))

    def summary(self) -> Dict[str, Any]:
        """Run statistics; wall times are left out of the sidecar so reruns compare equal"""
        return {
            'command': self.command,
            'counters': dict(sorted(self.counters.items())),
            'levels': self.levels,
            'excluded_points': self.excluded_points,
            'warnings': self.warnings,
        }

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / 'run_log.json'
        try:
            path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + '\n')
        except OSError as e:
            logging.getLogger(__name__).error("Could not write run log: %s", e)
        logging.getLogger(__name__).info(
            "Run '%s' finished in %.2fs (%s)", self.command, time.time() - self.started,
            ', '.join(f"{k}={v:.2f}s" for k, v in sorted(self.phases.items())) or 'no phases')
        return path
