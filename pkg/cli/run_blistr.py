import argparse
import json
import logging
import sys
import warnings

from api import DATA_PATH, cmd_cover, cmd_eval, cmd_init, cmd_merge, cmd_report, cmd_run, cmd_seeds
from blistr.lib.utils import ParseError

warnings.filterwarnings("ignore")

# command line flag -> configuration key
OVERRIDES = ['t_low', 't_high', 't_paramils', 'c_min', 'c_max', 'versatility', 'max_eligible', 'penalty', 'seed',
             'jobs', 'max_iterations', 'strict_versatility']


def build_parser():
    parser = argparse.ArgumentParser(description='Invent and co-evolve solver strategies on a problem corpus.')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('init', help='Create a run directory.')
    p.add_argument('dir', type=str, help='Run directory; it must be absent or empty.')
    p.add_argument('-sp', '--space', type=str, default='{}/demo_space.txt'.format(DATA_PATH),
                   help='Parameter space file: one "name { v1, v2, ... } [default]" line per parameter.')
    p.add_argument('-cp', '--corpus', type=str, default='{}/demo_corpus.txt'.format(DATA_PATH),
                   help='Corpus listing: one "problem_id [locator]" line per problem.')
    p.add_argument('-b', '--backend', type=str, default='{}/backend_synthetic.json'.format(DATA_PATH),
                   help='Backend JSON: synthetic landscape or external command template.')
    p.add_argument('-st', '--seeds', type=str, nargs='*', default=[],
                   help='Strategy files of the seed strategies (name=value lines).')
    p.add_argument('-s', '--seed', type=int, default=0, help='Random seed of the run.')

    p = sub.add_parser('run', help='Run or resume the loop of a run directory.')
    p.add_argument('dir', type=str)
    p.add_argument('-tl', '--t-low', type=float, default=None, help='ILS cutoff in seconds (default 1).')
    p.add_argument('-th', '--t-high', type=float, default=None, help='Global evaluation cutoff in seconds (default 10).')
    p.add_argument('-tp', '--t-paramils', type=float, default=None,
                   help='Solver-time budget of one ILS run in seconds (default 400).')
    p.add_argument('-cmin', '--c-min', type=int, default=None, help='Lower metric bound of the refined matrix (500).')
    p.add_argument('-cmax', '--c-max', type=int, default=None, help='Upper metric bound of the refined matrix (30000).')
    p.add_argument('-v', '--versatility', type=int, default=None,
                   help='Minimal number of refined wins of an eligible strategy (8).')
    p.add_argument('-n', '--max-eligible', type=int, default=None, help='Number of eligible strategies kept (20).')
    p.add_argument('-pen', '--penalty', type=int, default=None, help='Metric of unsolved runs (1000000).')
    p.add_argument('-s', '--seed', type=int, default=None, help='Random seed of the ILS runs.')
    p.add_argument('-j', '--jobs', type=int, default=None, help='Concurrent solver processes.')
    p.add_argument('-mi', '--max-iterations', type=int, default=None, help='Stop after this many iterations in total.')
    p.add_argument('-sv', '--strict-versatility', action='store_true', default=None,
                   help='Require more than versatility wins instead of at least that many.')
    p.add_argument('-q', '--quiet', action='store_true', help='No progress bars.')

    p = sub.add_parser('eval', help='Evaluate a strategy on the whole corpus.')
    p.add_argument('dir', type=str)
    p.add_argument('strategy', type=str, help='Strategy file.')
    p.add_argument('-c', '--cutoff', type=float, default=10.0, help='CPU limit in seconds.')
    p.add_argument('-o', '--output', type=str, default=None, help='Write the per-problem table as TSV.')

    p = sub.add_parser('cover', help='Extract a portfolio by set cover.')
    p.add_argument('dir', type=str)
    p.add_argument('-m', '--method', type=str, default='greedy', choices=['greedy', 'exact'])
    p.add_argument('-t', '--total-time', type=float, default=None,
                   help='Simulate an even split of this many seconds between the members.')
    p.add_argument('-k', '--max-size', type=int, default=None, help='Greedy only: keep the best k strategies.')

    p = sub.add_parser('report', help='Summarize one or more runs.')
    p.add_argument('dirs', type=str, nargs='+')
    p.add_argument('-p', '--plot', action='store_true', help='Save coverage and trace figures.')

    p = sub.add_parser('seeds', help='Choose seed strategies from a candidate pool.')
    p.add_argument('dir', type=str)
    p.add_argument('candidates', type=str, nargs='+', help='Candidate strategy files.')
    p.add_argument('-ss', '--sample-size', type=int, default=100, help='Number of sampled corpus problems.')
    p.add_argument('-c', '--cutoff', type=float, default=1.0, help='CPU limit of the sample runs.')
    p.add_argument('-s', '--seed', type=int, default=None, help='Sampling seed (the run seed by default).')

    p = sub.add_parser('merge', help='Import strategies and ledgers of other runs.')
    p.add_argument('dir', type=str)
    p.add_argument('sources', type=str, nargs='+')
    return parser


def main(argv=None):
    """
    Command line entry point.
    :return: exit status.
    """
    args = build_parser().parse_args(argv)
    try:
        if args.command == 'init':
            cmd_init(args.dir, args.space, args.corpus, args.backend, args.seeds, args.seed)
        elif args.command == 'run':
            return cmd_run(args.dir, {key: getattr(args, key) for key in OVERRIDES}, progress=not args.quiet)
        elif args.command == 'eval':
            df = cmd_eval(args.dir, args.strategy, args.cutoff)
            if args.output:
                df.to_csv(args.output, sep='\t', index=False)
            print('solved {} of {}'.format(int((df.status == 'solved').sum()), len(df)))
        elif args.command == 'cover':
            print(json.dumps(cmd_cover(args.dir, args.method, args.total_time, args.max_size), indent=2))
        elif args.command == 'report':
            print(cmd_report(args.dirs, args.plot).to_string(index=False))
        elif args.command == 'seeds':
            for sid in cmd_seeds(args.dir, args.candidates, args.sample_size, args.cutoff, args.seed):
                print(sid)
        elif args.command == 'merge':
            print('imported {} strategies and {} ledger rows'.format(*cmd_merge(args.dir, args.sources)))
    except (ParseError, ValueError, FileNotFoundError, FileExistsError) as e:
        logging.error("MAIN| {}".format(e))
        print('error: {}'.format(e), file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
