from .ising import IsingModel, IsingPoreParams, IsingState, Lattice, metropolis_sweep
from .maier_stein import MaierStein, MaierSteinParams
from .walk import BirthDeathChain

__all__ = ["BirthDeathChain", "IsingModel", "IsingPoreParams", "IsingState", "Lattice",
           "MaierStein", "MaierSteinParams", "metropolis_sweep"]
