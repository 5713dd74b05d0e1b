import os
import sys
import logging
import argparse

PROJECT_ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.append(os.path.join(PROJECT_ROOT, 'src'))

from cli import (
    load_run_config, cmd_synth, cmd_build, cmd_stats, cmd_train, cmd_eval,
    EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME,
)
from errors import AppGraphError, ConfigError

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')


def main():
    parser = argparse.ArgumentParser(description='build -> stats -> train -> eval in one go')
    parser.add_argument('--config', default=os.path.join(PROJECT_ROOT, 'config.ini'))
    parser.add_argument('--synthetic', action='store_true',
                        help='write a synthetic corpus first if the configured one is missing')
    parser.add_argument('--deep', action='store_true', help='also train and evaluate TransD + deep model')
    args = parser.parse_args()

    try:
        cfg = load_run_config(args.config)
        if args.synthetic and not os.path.exists(cfg.corpus):
            cmd_synth(cfg)
        logging.info("--- Building graph ---")
        cmd_build(cfg)
        cmd_stats(cfg)
        for kind in cfg.kinds:
            logging.info(f"--- Training {kind} ---")
            cmd_train(cfg, kind)
            cmd_eval(cfg, kind)
        if args.deep:
            if 'TransD' not in cfg.kinds:
                cmd_train(cfg, 'TransD')
            cmd_train(cfg, 'deep')
            cmd_eval(cfg, 'deep')
    except ConfigError as e:
        logging.error(e)
        return EXIT_CONFIG
    except (OSError, AppGraphError, ValueError) as e:
        logging.error(f"Pipeline failed: {e}")
        return EXIT_RUNTIME
    logging.info("Pipeline complete.")
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
