import os
import logging
from datetime import datetime
from typing import Dict, List, Optional

from safe_print_utils import to_ascii

LOG_FILE_NAME = 'fpt_runs.log'


class RunLogger:
    """
    Daily-reset log of experiment runs: one block per run and one line
    per result row. Only the message is written, no timestamp/level prefix.
    """

    def __init__(self, log_dir: Optional[str] = None):
        self.log_dir = log_dir or os.getenv("FPT_LOG_DIR") or os.path.dirname(os.path.abspath(__file__))
        os.makedirs(self.log_dir, exist_ok=True)
        self.log_file_path = os.path.join(self.log_dir, LOG_FILE_NAME)
        self._setup_daily_logger()

    def _setup_daily_logger(self):
        """Setup logger that resets daily and only logs essential info"""
        self._reset_log_if_new_day()

        self.logger = logging.getLogger(f"{__name__}.runs")
        self.logger.setLevel(logging.INFO)
        self.logger.propagate = False

        for handler in self.logger.handlers[:]:
            self.logger.removeHandler(handler)
            handler.close()

        file_handler = logging.FileHandler(self.log_file_path, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter('%(message)s'))
        self.logger.addHandler(file_handler)

    def _reset_log_if_new_day(self):
        """Reset log file if it's a new day"""
        try:
            current_time = datetime.now()
            if os.path.exists(self.log_file_path):
                file_time = datetime.fromtimestamp(os.path.getmtime(self.log_file_path))
                if file_time.date() != current_time.date():
                    with open(self.log_file_path, 'w', encoding='utf-8') as f:
                        f.write(f"=== LOG RESET - {current_time.strftime('%Y-%m-%d')} ===\n\n")
            else:
                with open(self.log_file_path, 'w', encoding='utf-8') as f:
                    f.write(f"=== NEW LOG - {current_time.strftime('%Y-%m-%d')} ===\n\n")
        except OSError as e:
            logging.getLogger(__name__).warning("Could not reset run log: %s", e)

    def log_run_start(self, scenario_names: List[str], n_grid: List[int], engine: str):
        log_entry = f"\n=== RUN START {datetime.now().strftime('%H:%M:%S')} ===\n"
        log_entry += f"ENGINE: {engine}\nN-GRID: {', '.join(str(n) for n in n_grid)}\nSCENARIOS:\n"
        for i, name in enumerate(scenario_names, 1):
            log_entry += f"{i}. {name}\n"
        log_entry += "=" * 50
        self.logger.info(to_ascii(log_entry))

    def log_row(self, row: Dict):
        self.logger.info(to_ascii(
            f"[{row['scenario']}] n={row['n']} engine={row['engine']} "
            f"P={row['P']:.6g} E_n={row['E_n']:.6g} ratio={row['ratio']:.6g}"
        ))

    def log_run_end(self, rows: int, failures: int = 0):
        status = "SUCCESS" if failures == 0 else f"{failures} FAILED"
        self.logger.info(f"=== RUN END: {rows} rows - {status} ===\n")

    def close(self):
        for handler in self.logger.handlers[:]:
            self.logger.removeHandler(handler)
            handler.close()
