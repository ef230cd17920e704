"""Private contact tracing over DH-blinded PSI cardinality and two-server
keyword PIR.

Layering, bottom up: group (prime-order group, blinding, truncation,
Schnorr), tokens (seeded token generation, contact logs, Merkle
commitments), dpf (distributed point functions), pir (bucketed two-server
retrieval), psica (the cardinality protocol), serverdb (ingest and day-store
builds), net (wire format and transports), system (roles, lifecycle,
simulator).
"""

from .group import (GROUP_ORDER, GroupElement, Scalar, SchnorrProof,
                    TransformedToken, TruncationParams, blind, generator,
                    group_add, hash_to_group, schnorr_prove, schnorr_verify,
                    truncate)
from .tokens import (ContactLog, Seed, Token, TokenCommitment, commit,
                     exchange, generate, prove_membership, regenerate_window,
                     verify_membership)
from .dpf import (DpfKey, PointSpec, dpf_eval, dpf_eval_full, dpf_gen,
                  key_size, naive_eval_full, naive_gen)
from .pir import (DbLayout, PirAnswer, PirQuery, Shard, address, membership,
                  multi_query, pir_answer, pir_query, reconstruct)
from .psica import (ClientQueryState, ServerKeyState, client_blind,
                    client_unblind, dh_psi_oracle, psi_ca, server_transform)
from .serverdb import (DayStore, LayoutPolicy, build_day, incremental_plan,
                       ingest, open_seed, publish, seal_seed)
from .net import SessionTranscript, WireError, decode, encode, session
from .system import (AlertResult, ClientApp, Provider, ScenarioConfig,
                     Server1, Server2, daily_query, setup, simulate)

__version__ = "0.1.0"
