"""Client-side applications: state, transitions and namespace sync."""

from .currency import CurrencyTx, KeyPair, apply_currency, currency_app, make_fee, make_transfer
from .dummy import apply_dummy, dummy_app, dummy_payload
from .registrar import Registrar, apply_registrar, register_payload, registrar_app, topup_payload
from .state import AppDescriptor, AppState, BlockContext, apply_block, dependency_closure, replay
from .sync import BlockStore, OmittingStore, PeerMisbehavior, SyncFailed, SyncStats, sync_app

__all__ = [
    "AppDescriptor", "AppState", "BlockContext", "BlockStore", "CurrencyTx", "KeyPair",
    "OmittingStore", "PeerMisbehavior", "Registrar", "SyncFailed", "SyncStats",
    "apply_block", "apply_currency", "apply_dummy", "apply_registrar", "currency_app",
    "dependency_closure", "dummy_app", "dummy_payload", "make_fee", "make_transfer",
    "register_payload", "registrar_app", "replay", "sync_app", "topup_payload",
]
