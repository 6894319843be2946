"""Run configuration: one ConfigSection per pipeline stage and the RunConfig that loads, snapshots and converts them"""

import hashlib

from causalgnn import log, system
from causalgnn.configuration import ConfigFile, ConfigSection, ConfigSetting
from causalgnn.configuration.datatypes import (FDRMethod, IntegerList, ModelKind, NonNegativeFloat, PositiveInteger, Preset, Probability,
                                               StringList)
from causalgnn.errors import ConfigurationError
from causalgnn.models import ModelConfig
from causalgnn.pcmci import PCMCIConfig
from causalgnn.training import TrainConfig


__all__ = ('DataSettings', 'DiscoverySettings', 'ModelSettings', 'TrainingSettings', 'ExplainSettings', 'OutputSettings', 'RunConfig')


logger = log.get_logger(__name__)


class DataSettings(ConfigSection):
    __section__ = 'Data'

    preset = ConfigSetting(type=Preset, value='fig6-default')
    dataset = ''
    seed = ConfigSetting(type=int, value=0)
    length = ConfigSetting(type=PositiveInteger, value=2000)
    burn_in = 200
    positive_rate = ConfigSetting(type=Probability, value=None)
    local_window = ConfigSetting(type=PositiveInteger, value=39)
    oci_window = ConfigSetting(type=PositiveInteger, value=10)
    stride = ConfigSetting(type=PositiveInteger, value=4)
    horizon = ConfigSetting(type=PositiveInteger, value=1)
    sweep_horizons = ConfigSetting(type=IntegerList, value=[1, 2, 8])


class DiscoverySettings(ConfigSection):
    __section__ = 'Discovery'

    # 0 derives them from the dataset sidecar: resample = index cadence, period = seasonal period / resample
    period = 0
    resample = 0
    tau_max = ConfigSetting(type=PositiveInteger, value=6)
    alpha = ConfigSetting(type=Probability, value=0.05)
    alpha_pc = ConfigSetting(type=Probability, value=0.2)
    p_max = 10
    p_x = 10
    fdr_method = ConfigSetting(type=FDRMethod, value='none')
    target_autolinks = True
    contemporaneous = True
    jobs = ConfigSetting(type=PositiveInteger, value=1)


class ModelSettings(ConfigSection):
    __section__ = 'Model'

    kind = ConfigSetting(type=ModelKind, value='gnn_causal')
    roster = ConfigSetting(type=StringList, value=['lstm', 'gru', 'gnn_corr', 'gnn_full', 'gnn_causal'])
    hidden_dim = ConfigSetting(type=PositiveInteger, value=32)
    gnn_hidden = ConfigSetting(type=PositiveInteger, value=64)
    leaky_slope = ConfigSetting(type=Probability, value=0.01)


class TrainingSettings(ConfigSection):
    __section__ = 'Training'

    lr = ConfigSetting(type=NonNegativeFloat, value=1e-5)
    weight_decay = ConfigSetting(type=NonNegativeFloat, value=5e-6)
    neg_pos_ratio = ConfigSetting(type=PositiveInteger, value=5)
    epochs = ConfigSetting(type=PositiveInteger, value=100)
    batch_size = ConfigSetting(type=PositiveInteger, value=64)
    seeds = ConfigSetting(type=IntegerList, value=[0, 1, 2])
    refresh_resample = True
    jobs = ConfigSetting(type=PositiveInteger, value=1)


class ExplainSettings(ConfigSection):
    __section__ = 'Explain'

    permutations = ConfigSetting(type=PositiveInteger, value=500)
    scale = True
    jobs = ConfigSetting(type=PositiveInteger, value=1)


class OutputSettings(ConfigSection):
    __section__ = 'Output'

    directory = 'output'


class RunConfig(object):
    """The resolved settings of a run, held by the section classes"""

    sections = (DataSettings, DiscoverySettings, ModelSettings, TrainingSettings, ExplainSettings, OutputSettings)

    @classmethod
    def section(cls, name):
        for section in cls.sections:
            if section.__section__.lower() == name.lower():
                return section
        raise ConfigurationError('unknown configuration section %r' % name)

    @classmethod
    def load(cls, path=None, overrides=None):
        """Reset to the defaults, read path (ini, JSON or TOML) and apply {section: {name: value}} overrides"""
        for section in cls.sections:
            section.reset()
        if path:
            config_file = ConfigFile(path)
            for section in cls.sections:
                section.read(config_file)
        for name, values in (overrides or {}).items():
            values = {key: value for key, value in values.items() if value is not None}
            if values:
                cls.section(name).set(**values)
        return cls

    @classmethod
    def as_dict(cls):
        return {section.__section__: dict(section) for section in cls.sections}

    @classmethod
    def snapshot_text(cls):
        return '\n'.join(section.dump() for section in cls.sections)

    @classmethod
    def snapshot(cls, path):
        """Write the resolved settings as an ini file that loads back to the same configuration"""
        system.write_text(path, cls.snapshot_text())
        return path

    @classmethod
    def config_hash(cls):
        return hashlib.sha256(cls.snapshot_text().encode('utf-8')).hexdigest()

    @classmethod
    def pcmci_config(cls):
        settings = DiscoverySettings
        return PCMCIConfig(tau_max=settings.tau_max, alpha=settings.alpha, alpha_pc=settings.alpha_pc, p_max=settings.p_max, p_x=settings.p_x,
                           fdr_method=settings.fdr_method, jobs=settings.jobs)

    @classmethod
    def train_config(cls):
        settings = TrainingSettings
        return TrainConfig(lr=settings.lr, weight_decay=settings.weight_decay, neg_pos_ratio=settings.neg_pos_ratio, epochs=settings.epochs,
                           batch_size=settings.batch_size, seeds=tuple(settings.seeds), refresh_resample=settings.refresh_resample, jobs=settings.jobs)

    @classmethod
    def model_config(cls, windows, horizon=None):
        return ModelConfig(local_count=len(windows.local_names), oci_count=len(windows.oci_names), local_window=DataSettings.local_window,
                           oci_window=DataSettings.oci_window, horizon=horizon or DataSettings.horizon, hidden_dim=ModelSettings.hidden_dim,
                           gnn_hidden=ModelSettings.gnn_hidden, leaky_slope=ModelSettings.leaky_slope)
