from diracsea.commands.base import BaseCommand
from diracsea.commands.dispersion import DispersionCommand
from diracsea.commands.evolve import EvolveCommand
from diracsea.commands.spectrum import SpectrumCommand
from diracsea.commands.sweep import SweepCommand

COMMANDS = [
  SpectrumCommand(),
  EvolveCommand(),
  SweepCommand(),
  DispersionCommand(),
]

def get_command_by_name(name: str) -> BaseCommand:
  for command in COMMANDS:
    if command.name == name:
      return command
  raise ValueError(f"Command with name {name} not found")
