"""Desk-scale zero-resource NMT laboratory.

Teacher-student distillation across a pivot language, plus the two-step
pivot baseline, on synthetic trilingual corpora.
"""

from .tensor import (Tensor, ComputationTape, backward, finite_difference_check)
from .vocab import Vocabulary, BOS, EOS, PAD, UNK
from .model import (DimConfig, ModelParams, encode, decoder_step, initial_state,
                    sequence_log_prob, greedy_decode, beam_search, sample_decode)
from .objectives import (TeachingMethod, DistillBatchLoss, OptimizerState,
                         mle_loss, sent_teaching_loss, word_teaching_loss,
                         kbest_renormalize, optimizer_step, train, Schedule)
from .evaluation import (BleuReport, KlEstimate, corpus_bleu, sentence_bleu,
                         validation_loss, measure_j_sent, measure_j_word,
                         peakedness)
from .corpus import (GeneratorConfig, TrilingualSplit, ParallelCorpus,
                     generate_trilingual, load_parallel, build_vocab)
from .pivot import PivotChain, two_step_decode
from .transfer import init_from_teacher, DEFAULT_FREEZE_PLAN

__version__ = "0.1.0"
