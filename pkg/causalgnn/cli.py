"""
Command line interface: generate, discover, train, evaluate, explain, sweep
and run (the whole chain). Every command writes the resolved configuration to
<out>/config.ini next to its outputs.
"""

import argparse
import os
import sys

import numpy as np

from causalgnn import __version__, log, seeding, system
from causalgnn.config import DataSettings, DiscoverySettings, ExplainSettings, ModelSettings, OutputSettings, RunConfig
from causalgnn.configuration.datatypes import LogLevel, ModelKind, Preset
from causalgnn.errors import DataError, Error
from causalgnn.explain import default_groups, explain_samples, save_attributions
from causalgnn.graph import causal_adjacency, full_adjacency
from causalgnn.metrics import evaluate
from causalgnn.models import Model
from causalgnn.notification import NotificationCenter, ProgressObserver
from causalgnn.pcmci import PCMCI, CausalGraph, LinkAssumptions, graph_precision_recall, preprocess_causal_stationarity
from causalgnn.synthdata import generate, load_dataset, make_windows, preset, save_dataset
from causalgnn.training import TrainResult, train_seeds


__all__ = ('ProgressReporter', 'cmd_generate', 'cmd_discover', 'cmd_train', 'cmd_evaluate', 'cmd_explain', 'cmd_sweep', 'cmd_run', 'main')


logger = log.get_logger(__name__)


class ProgressReporter(ProgressObserver):
    """Logs the progress notifications posted by discovery, training and explanation"""

    def _NH_PCMCIDidSelectParents(self, notification):
        logger.info('PC1: %d parents for %s', len(notification.data.parents), notification.data.variable)

    def _NH_PCMCIDidFinish(self, notification):
        logger.info('discovery finished with %d links', len(notification.data.graph))

    def _NH_TrainerDidFinishEpoch(self, notification):
        data = notification.data
        logger.info('[%s seed=%d] epoch %d loss %.6f', data.model, data.seed, data.epoch, data.loss)

    def _NH_TrainerDidSelectModel(self, notification):
        data = notification.data
        logger.info('[%s seed=%d] kept epoch %d', data.model, data.seed, data.epoch)

    def _NH_ExplainerDidFinishSample(self, notification):
        logger.info('explained sample %d', notification.data.index)


def output_path(*parts):
    return os.path.join(OutputSettings.directory, *parts)


def dataset_path():
    return DataSettings.dataset or output_path('data', '%s.csv' % DataSettings.preset)


def graph_path():
    return output_path('discovery', 'graph.json')


def checkpoint_prefix(kind, horizon, seed):
    return output_path('checkpoints', '%s_h%d_seed%d' % (kind, horizon, seed))


def _load_dataset():
    path = dataset_path()
    if not os.path.exists(path):
        if DataSettings.dataset:
            raise DataError('dataset %s does not exist' % path)
        logger.info('no dataset at %s, generating it', path)
        cmd_generate()
    return load_dataset(path)


def _load_graph():
    if not os.path.exists(graph_path()):
        logger.info('no causal graph at %s, running discovery', graph_path())
        return cmd_discover()
    try:
        return CausalGraph.load(graph_path())
    except (KeyError, TypeError, ValueError) as e:
        raise DataError('malformed causal graph %s: %s' % (graph_path(), e)) from None


def _windows(dataset, horizon):
    return make_windows(dataset, DataSettings.local_window, DataSettings.oci_window, horizon, DataSettings.stride)


def _adjacency(kind, windows):
    variables = list(windows.local_names + windows.oci_names)
    if kind == 'gnn_full':
        return full_adjacency(variables)
    if kind == 'gnn_causal':
        adjacency = causal_adjacency(_load_graph())
        if list(adjacency.variables) != variables:
            raise DataError('the causal graph covers %s, the dataset %s' % (', '.join(adjacency.variables), ', '.join(variables)))
        return adjacency
    return None


def _discovery_scales(sidecar):
    resample = DiscoverySettings.resample or int(sidecar.get('cadence', 1))
    period = DiscoverySettings.period or max(1, int(sidecar.get('seasonal_period', 12)) // resample)
    return resample, period


def cmd_generate():
    """Simulate the configured preset and write the CSV and its sidecar; returns the SyntheticData"""
    spec = preset(DataSettings.preset)
    if DataSettings.positive_rate is not None:
        spec = spec.with_label(positive_rate=DataSettings.positive_rate)
    data = generate(spec, DataSettings.length, seed=DataSettings.seed, burn_in=DataSettings.burn_in)
    path = dataset_path()
    save_dataset(path, data)
    print('%s: %d steps, positive rate %.6f' % (path, data.dataset.T, data.positive_rate))
    return data


def cmd_discover():
    """Preprocess the dataset, run PCMCI under the mediator ordering and write the graph as JSON, DOT and an adjacency CSV"""
    dataset, sidecar = _load_dataset()
    resample, period = _discovery_scales(sidecar)
    data = preprocess_causal_stationarity(dataset, period, resample)
    config = RunConfig.pcmci_config()
    assumptions = LinkAssumptions.mediator_ordering(data.kinds, config.tau_max, DiscoverySettings.target_autolinks, DiscoverySettings.contemporaneous)
    graph = PCMCI(data, assumptions, config).run()
    graph.save(graph_path())
    system.write_text(output_path('discovery', 'graph.dot'), graph.to_dot())
    causal_adjacency(graph).save(output_path('discovery', 'adjacency.csv'))
    print(graph.to_link_table())
    if 'ground_truth' in sidecar and resample == 1:
        precision, recall = graph_precision_recall(graph, CausalGraph.from_json(sidecar['ground_truth']))
        print('precision %.3f, recall %.3f against the generating graph' % (precision, recall))
    return graph


def cmd_train(kind=None, horizon=None):
    """Train the model kind for every configured seed and write one checkpoint per seed"""
    kind = kind or ModelSettings.kind
    horizon = horizon or DataSettings.horizon
    dataset, _ = _load_dataset()
    windows = _windows(dataset, horizon)
    results = train_seeds(kind, _adjacency(kind, windows), windows, RunConfig.train_config(), RunConfig.model_config(windows, horizon))
    config_hash = RunConfig.config_hash()
    for result in results:
        result.model.save(checkpoint_prefix(kind, horizon, result.seed), seed=result.seed, history=result.history, best_epoch=result.best_epoch,
                          best_val_auprc=result.best_val_auprc, config_hash=config_hash)
    return results


def _load_results(kind, horizon):
    results = []
    for seed in RunConfig.train_config().seeds:
        prefix = checkpoint_prefix(kind, horizon, seed)
        if not os.path.exists(prefix + '.json'):
            raise DataError('no checkpoint at %s; run train first' % prefix)
        model, manifest = Model.load(prefix)
        results.append(TrainResult(kind, seed, model, manifest.get('history', []), manifest.get('best_epoch', 0), manifest.get('best_val_auprc')))
    return results


def cmd_evaluate(kind=None, horizon=None, results=None, directory=None):
    """Score the checkpoints of every seed on the test split and write the report and curves"""
    kind = kind or ModelSettings.kind
    horizon = horizon or DataSettings.horizon
    dataset, _ = _load_dataset()
    windows = _windows(dataset, horizon)
    report = evaluate(results or _load_results(kind, horizon), windows.test)
    report.save(directory or output_path('evaluation'))
    print('%s h=%d: AUPRC %.4f ± %.4f, AUROC %.4f ± %.4f, positive fraction %.6f' %
          (kind, horizon, report.mean_auprc, report.std_auprc, report.mean_auroc, report.std_auroc, report.positive_fraction))
    return report


def cmd_explain(kind=None, horizon=None):
    """Shapley attribution of every positive test sample for the checkpoint of the first configured seed"""
    kind = kind or ModelSettings.kind
    horizon = horizon or DataSettings.horizon
    dataset, _ = _load_dataset()
    windows = _windows(dataset, horizon)
    positives = windows.test.subset(np.flatnonzero(windows.test.y == 1))
    if not len(positives):
        logger.warning('the test split has no positive samples; no attributions written')
        return []
    seed = RunConfig.train_config().seeds[0]
    prefix = checkpoint_prefix(kind, horizon, seed)
    if not os.path.exists(prefix + '.json'):
        raise DataError('no checkpoint at %s; run train first' % prefix)
    model, _ = Model.load(prefix)
    groups = default_groups(windows.local_names, windows.oci_names, DataSettings.local_window, DataSettings.oci_window)
    attributions = explain_samples(model, positives, windows.train, groups, ExplainSettings.permutations, seeding.stream(seed, 'explain'), ExplainSettings.jobs)
    save_attributions(output_path('explain'), attributions, positives, ExplainSettings.scale)
    print('explained %d positive test samples with %d feature groups' % (len(attributions), len(groups)))
    return attributions


def cmd_sweep():
    """Train and evaluate the model roster at every sweep horizon and write horizon_sweep.csv"""
    rows = []
    for horizon in DataSettings.sweep_horizons:
        for kind in ModelSettings.roster:
            kind = ModelKind(kind)
            report = cmd_evaluate(kind, horizon, cmd_train(kind, horizon), output_path('evaluation', 'h%d' % horizon))
            rows.append([horizon, kind, report.mean_auprc, report.std_auprc, report.mean_auroc, report.std_auroc, report.random_auprc])
    header = ['horizon', 'model', 'mean_auprc', 'std_auprc', 'mean_auroc', 'std_auroc', 'random_auprc']
    system.write_csv(output_path('horizon_sweep.csv'), header, rows)
    return rows


def cmd_run():
    """generate, discover, train, evaluate and explain in one go"""
    if not DataSettings.dataset:
        cmd_generate()
    cmd_discover()
    results = cmd_train()
    cmd_evaluate(results=results)
    cmd_explain()


COMMANDS = {'generate': cmd_generate, 'discover': cmd_discover, 'train': cmd_train, 'evaluate': cmd_evaluate,
            'explain': cmd_explain, 'sweep': cmd_sweep, 'run': cmd_run}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', metavar='PATH', help='configuration file (ini, JSON or TOML)')
    common.add_argument('--seed', type=int, help='seed of the generated data')
    common.add_argument('--out', metavar='DIR', help='output directory')
    common.add_argument('--model', type=ModelKind, help='model kind: %s' % ', '.join(ModelKind.choices))
    common.add_argument('--horizon', type=int, metavar='STEPS', help='forecast horizon in fine steps')
    common.add_argument('--preset', type=Preset, help='synthetic data preset: %s' % ', '.join(Preset.choices))
    common.add_argument('--log-level', type=LogLevel, help='log level name or number')

    parser = argparse.ArgumentParser(prog='causal-gnn', description='Causal graph neural networks for wildfire danger forecasting')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    commands = parser.add_subparsers(dest='command', metavar='command', required=True)
    for name, function in COMMANDS.items():
        commands.add_parser(name, parents=[common], help=function.__doc__.splitlines()[0])
    return parser


def configure(args):
    overrides = {'Data': {'seed': args.seed, 'horizon': args.horizon, 'preset': args.preset},
                 'Model': {'kind': args.model},
                 'Output': {'directory': args.out}}
    RunConfig.load(args.config, overrides)
    RunConfig.snapshot(output_path('config.ini'))


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.log_level is not None:
        log.level.current = args.log_level
    log.capture_warnings()
    try:
        with NotificationCenter().observing(ProgressReporter()):
            configure(args)
            COMMANDS[args.command]()
    except Error as e:
        log.error('%s: %s', e.__class__.__name__, e)
        return e.exit_code
    finally:
        log.capture_warnings(False)
    return 0


if __name__ == '__main__':
    sys.exit(main())
