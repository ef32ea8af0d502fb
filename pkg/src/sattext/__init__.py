import sattext.sat_config
import sattext.sat_train
import sattext.sat_ablation

from sattext.sat_config import SATConfig, load_config
from sattext.sat_dataset import SATDataset, load_dataset
from sattext.sat_train import run_baseline, run_experiment
