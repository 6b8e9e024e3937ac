""" Plots the top-k and CDF tables of a generation task report, and optionally the
(alpha, beta) sweep grid."""

import os
import json
from argparse import ArgumentDefaultsHelpFormatter, ArgumentParser

from lib.plotting import plot_cdf, plot_sweep_grid, plot_topk
from lib.directories import FIGURES_DIR
from lib.logger import setup_logging

if __name__=="__main__":

    parser=ArgumentParser(description=__doc__, 
                        formatter_class=ArgumentDefaultsHelpFormatter)
    parser.add_argument('report_dir', 
                        type=str, 
                        nargs="?",
                        default=None,
                        help='Directory holding report.json, topk.csv and cdf.csv.')
    parser.add_argument("--sweep-csv",
                        type=str,
                        default=None,
                        help="Sweep grid written by 'lens.py sweep'.")
    parser.add_argument("--save-dir",
                        type=str,
                        default="",
                        help="Directory to save the figures. Defaults to a directory "
                        "named after the task under data/figures.")
    args=parser.parse_args()

    if args.report_dir is None and args.sweep_csv is None:
        parser.error("Provide a report directory, a sweep grid or both.")
    setup_logging()

    if args.report_dir is not None:
        with open(os.path.join(args.report_dir, "report.json")) as infile:
            task = json.load(infile)["task"]
        save_dir = args.save_dir or os.path.join(FIGURES_DIR, task["name"])
        if task["kind"] == "generation":
            plot_topk(args.report_dir, task["field"], save_fig=True, save_dir=save_dir)
            plot_cdf(args.report_dir, task["field"], save_fig=True, save_dir=save_dir)
        else:
            print(f"Task {task['name']} is an understanding task, no distribution to plot.")

    if args.sweep_csv is not None:
        plot_sweep_grid(args.sweep_csv, save_fig=True, save_dir=args.save_dir or FIGURES_DIR)
    print("Done!\n")
