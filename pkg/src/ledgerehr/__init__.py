"""ledgerehr: a permissioned consortium ledger for electronic health records.

Signed patient-record transactions are ordered by quorum consensus,
committed into Merkle-rooted hash-chained blocks, persisted to an
append-only log, and served through an HTTP node with a built-in
transaction explorer.
"""

__version__ = "0.1.0"
