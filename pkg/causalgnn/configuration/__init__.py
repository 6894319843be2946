"""Configuration sections described as classes and read from ini, JSON or TOML files"""

import json
import os

from configparser import ConfigParser, NoSectionError
from inspect import isclass
from itertools import chain
from types import BuiltinFunctionType

from causalgnn import log
from causalgnn.configuration import datatypes
from causalgnn.errors import ConfigurationError


__all__ = 'ConfigFile', 'ConfigSection', 'ConfigSetting', 'SaveState', 'AtomicUpdate', 'format_value', 'datatypes'


logger = log.get_logger(__name__)


def _isdescriptor(value):
    return bool({'__get__', '__set__', '__delete__'}.intersection(dir(value)))


def format_value(value):
    """The ini text of a setting value; parsing it with the setting type gives the value back"""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, (list, tuple)):
        return ', '.join(format_value(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _read_json(filename):
    with open(filename) as f:
        return json.load(f)


def _read_toml(filename):
    try:
        import tomllib
    except ImportError:
        raise ConfigurationError('TOML configuration files require python 3.11 or newer')
    with open(filename, 'rb') as f:
        return tomllib.load(f)


class ConfigFile(object):
    """
    A parsed configuration file, cached by path until the file changes.

    JSON and TOML documents must map section names to tables of settings;
    their values are turned into ini text so that every format goes through
    the same setting types.
    """

    instances = {}
    readers = {'.json': _read_json, '.toml': _read_toml}

    def __new__(cls, filename):
        filename = os.path.realpath(filename)
        try:
            timestamp = os.stat(filename).st_mtime
        except OSError as e:
            raise ConfigurationError('cannot read configuration file %s: %s' % (filename, e.strerror))
        instance = cls.instances.get(filename)
        if instance is None or instance.timestamp < timestamp:
            instance = object.__new__(cls)
            instance.parser = ConfigParser(interpolation=None)
            instance.parser.optionxform = lambda x: x.replace('-', '_')
            instance.filename = filename
            instance.timestamp = timestamp
            instance._load()
            cls.instances[filename] = instance
        return instance

    def _load(self):
        reader = self.readers.get(os.path.splitext(self.filename)[1].lower())
        try:
            if reader is None:
                self.parser.read(self.filename)
                return
            content = reader(self.filename)
        except (ValueError, OSError) as e:
            raise ConfigurationError('cannot parse configuration file %s: %s' % (self.filename, e))
        if not isinstance(content, dict) or not all(isinstance(section, dict) for section in content.values()):
            raise ConfigurationError('configuration file %s must map section names to tables of settings' % self.filename)
        self.parser.read_dict({section: {name: format_value(value) for name, value in settings.items()} for section, settings in content.items()})

    def get_setting(self, section, setting, type=str, default=''):
        """Get a setting from a given section using type, or default if missing or invalid"""
        try:
            value = self.parser.get(section, setting)
        except Exception:
            return default
        try:
            return datatypes.Boolean(value) if type is bool else type(value)
        except Exception as e:
            logger.warning('ignoring invalid config value: %s.%s=%s (%s)', section, setting, value, e)
            return default

    def get_section(self, section):
        """The (name, value) pairs of section, empty if the file does not have it"""
        try:
            return self.parser.items(section)
        except NoSectionError:
            return []


class ConfigSetting(object):
    def __init__(self, type, value=None):
        self.type = type
        self.value = value

    def __get__(self, obj, owner):
        return self.value

    def __set__(self, obj, value, convert=True):
        if convert and value is not None and not (isclass(self.type) and isinstance(value, self.type) and type(value) is not bool):
            value = self.type(value)
        self.value = value


class SaveState(object):
    """A copy of the values of a section, to compare with or reset to"""

    def __init__(self, owner):
        if not isclass(owner) or not isinstance(owner, ConfigSectionType):
            raise TypeError('owner should be a ConfigSection subclass')
        self.__owner__ = owner
        self.__state__ = dict(owner)

    def __repr__(self):
        return '<{0.__owner__.__name__} state: {0.__state__!r}>'.format(self)

    def __getitem__(self, item):
        return self.__state__[item]

    def __iter__(self):
        return iter(self.__state__.items())

    def __len__(self):
        return len(self.__state__)

    def __eq__(self, other):
        if not isinstance(other, SaveState):
            return NotImplemented
        return self.__owner__ is other.__owner__ and self.__state__ == other.__state__


class AtomicUpdate(object):
    """Within the block either every assignment to the section sticks or none does"""

    def __init__(self, config_section):
        self.config_section = config_section

    def __enter__(self):
        self._saved_state = SaveState(self.config_section)
        return self

    def __exit__(self, exc_type, exc_value, exc_traceback):
        if exc_type is not None:
            self.config_section.reset(state=self._saved_state)
        del self._saved_state
        return False


class ConfigSectionType(type):
    __section__ = None

    def __new__(mcls, name, bases, dictionary):
        settings = {}
        # settings of the parents are cloned unless redefined here
        for setting_name, setting in chain(*(cls.__settings__.items() for cls in bases if isinstance(cls, ConfigSectionType))):
            if setting_name not in dictionary and setting_name not in settings:
                settings[setting_name] = ConfigSetting(type=setting.type, value=setting.value)
        for attr, value in dictionary.items():
            if isinstance(value, ConfigSetting):
                settings[attr] = value
            elif attr.startswith('__') or _isdescriptor(value) or type(value) is BuiltinFunctionType:
                continue
            else:
                settings[attr] = ConfigSetting(type=datatypes.Boolean if type(value) is bool else type(value), value=value)
        dictionary.update(settings)

        cls = super(ConfigSectionType, mcls).__new__(mcls, name, bases, dictionary)
        cls.__settings__ = settings
        cls.__defaults__ = SaveState(cls)
        return cls

    def __iter__(cls):
        return ((name, descriptor.__get__(cls, cls.__class__)) for name, descriptor in cls.__settings__.items())

    def __setattr__(cls, name, value):
        if name == '__settings__' or name not in cls.__settings__:  # __settings__ itself is assigned before the lookup can work
            super(ConfigSectionType, cls).__setattr__(name, value)
        else:
            cls.__settings__[name].__set__(cls, value)

    def __delattr__(cls, name):
        if name == '__settings__' or name in cls.__settings__:
            raise AttributeError('%r attribute %r cannot be deleted' % (cls.__name__, name))
        super(ConfigSectionType, cls).__delattr__(name)

    def read(cls, cfgfile):
        """Read the settings of this section from a file, ignoring (with a warning) values the setting types reject"""
        if cls.__section__ is None:
            raise ValueError('%s does not name a config section' % cls.__name__)
        config_file = cfgfile if isinstance(cfgfile, ConfigFile) else ConfigFile(cfgfile)
        for name, value in config_file.get_section(cls.__section__):
            if name not in cls.__settings__:
                logger.warning('ignoring unknown config setting: %s.%s', cls.__section__, name)
                continue
            try:
                setattr(cls, name, value)
            except Exception as e:
                logger.warning('ignoring invalid config value: %s.%s=%s (%s)', cls.__section__, name, value, e)

    def set(cls, **kw):
        """Atomically set multiple settings at once (ConfigurationError if any of them is unknown or invalid)"""
        unknown = set(kw).difference(cls.__settings__)
        if unknown:
            raise ConfigurationError('%s has no setting %r' % (cls.__section__ or cls.__name__, sorted(unknown)[0]))
        with AtomicUpdate(cls):
            for name, value in kw.items():
                try:
                    setattr(cls, name, value)
                except (TypeError, ValueError) as e:
                    raise ConfigurationError('invalid %s.%s=%r: %s' % (cls.__section__ or cls.__name__, name, value, e)) from None

    def reset(cls, state=None):
        """Reset settings to the provided save state or to the default values from the class definition if state is None"""
        state = state or cls.__defaults__
        if not isinstance(state, SaveState):
            raise TypeError('state should be a SaveState instance')
        if state.__owner__ is not cls:
            raise ValueError('save state does not belong to this config section')
        for name, descriptor in cls.__settings__.items():
            descriptor.__set__(cls, state[name], convert=False)

    def dump(cls):
        """The section as ini text; settings without a value are left out"""
        lines = ['[%s]' % cls.__section__]
        lines.extend('%s = %s' % (name, format_value(value)) for name, value in cls if value is not None)
        return '\n'.join(lines) + '\n'


class ConfigSection(object, metaclass=ConfigSectionType):
    """
    A section of the run configuration, used as a class and never instantiated.

    Plain class attributes become settings typed after their value; use
    ConfigSetting to give a different type or a None default. Settings of a
    parent section are cloned, so subclasses never share values with it.
    __section__ names the section in the file.
    """

    __section__ = None

    def __new__(cls, *args, **kw):
        raise TypeError('cannot instantiate ConfigSection class')
