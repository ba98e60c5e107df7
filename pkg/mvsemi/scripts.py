from __future__ import division, absolute_import
from __future__ import print_function
from argparse import ArgumentParser
from pathlib import Path

import numpy as np

from .generators import make_glyphs
from .helpers import mkdir_p
from .mvsemi import collect_runs, render_table

GLYPHS_DESCRIPTION = "Write a glyph set as glyph_<c>.npy files for the glyph_dir option."


def parse_export_glyphs(argv=None):
    p = ArgumentParser(description=GLYPHS_DESCRIPTION)
    p.add_argument('directory', type=Path,
            help="Output directory.")
    p.add_argument('-n', '--num-classes', dest='num_classes', type=int, default=10,
            metavar='<int>', help="Number of glyphs.")
    p.add_argument('-s', '--side', dest='side', type=int, default=7,
            metavar='<int>', help="Glyph side length in pixels.")
    p.add_argument('-d', '--min-distance', dest='min_distance', type=int, default=10,
            metavar='<int>', help="Minimum pairwise Hamming distance.")
    p.add_argument('--seed', type=int, default=0, metavar='<int>')
    args = p.parse_args(argv)

    if args.num_classes < 2:
        raise ValueError('At least two glyphs are needed.')
    return args


def export_glyphs(argv=None):
    args = parse_export_glyphs(argv)
    glyphs = make_glyphs(args.num_classes, args.side, args.seed, min_distance=args.min_distance)
    directory = mkdir_p(args.directory)
    for c, glyph in enumerate(glyphs):
        np.save(directory.joinpath('glyph_{:d}.npy'.format(c)), glyph.astype(np.uint8))
    print('Wrote {:d} glyphs to {:s}'.format(len(glyphs), str(directory)))


def parse_summarize_runs(argv=None):
    p = ArgumentParser(description="Print the method table of one or more run directories.")
    p.add_argument('run_dirs', nargs='+', type=Path,
            help="Directories searched for metrics.json files.")
    p.add_argument('-o', '--csv', dest='csv', type=Path, default=None, metavar='<file>',
            help="Also write the table as CSV.")
    return p.parse_args(argv)


def summarize_runs(argv=None):
    args = parse_summarize_runs(argv)
    table = render_table(collect_runs(args.run_dirs))
    if not len(table):
        raise ValueError('No run metrics found.')
    print(table.to_string(index=False))
    if args.csv is not None:
        table.to_csv(args.csv, index=False, encoding='utf-8')
