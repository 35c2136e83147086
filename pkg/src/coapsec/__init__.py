"""CoAP application-layer security toolkit.

Implements OSCORE message protection, an EDHOC-style authenticated key
exchange, and a software key vault that keeps all secret key material
behind a narrow call gateway. Ships with in-memory and UDP transports,
a demo harness, an HTTP service and a CLI.
"""

__version__ = "0.1.0"
