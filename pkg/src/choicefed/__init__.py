"""choicefed: federated estimation of binary mode-choice models.

A chief node runs simulated annealing while worker nodes holding private
survey observations return only evaluated log-likelihood contributions
over encrypted peer-to-peer channels; transaction metadata goes to a
tamper-evident hash-chained ledger and raw data never leaves a worker.
"""

from .annealing import AnnealingSchedule, AnnealResult, outer_level_count
from .datagen import SurveyDataset, gen_data, partition
from .experiment import (ExperimentConfig, centralized_oracle, chief_run,
                         run_experiment)
from .ledger import Ledger, LedgerEntry, TxType, verify_chain
from .model import (BetaVector, Choice, Dataset, FitStatistics, Observation,
                    gradient, log_likelihood, null_log_likelihood, prob_auto,
                    prob_train, rho_square, std_errors, utility)
from .protocol import ContractTerms, Message, MsgType, terms_compatible
from .runtime import ChiefNode, LatencyRecord, WorkerNode

__version__ = "0.1.0"
