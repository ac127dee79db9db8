"""Local DoT and DoH resolvers for exercising the prober."""
from __future__ import annotations

import base64
import datetime as dt
import http.server
import ipaddress
import socket
import socketserver
import ssl
import struct
import threading
import urllib.parse
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import NameOID

from dnsfp.padprobe.wire import build_response


def self_signed(dirpath: Path) -> tuple[str, str]:
    key = ec.generate_private_key(ec.SECP256R1())
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "localhost")])
    now = dt.datetime.now(dt.timezone.utc)
    cert = (x509.CertificateBuilder().subject_name(name).issuer_name(name).public_key(key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now - dt.timedelta(days=1)).not_valid_after(now + dt.timedelta(days=2))
            .add_extension(x509.SubjectAlternativeName([x509.DNSName("localhost"),
                                                        x509.IPAddress(ipaddress.ip_address("127.0.0.1"))]),
                           critical=False)
            .sign(key, hashes.SHA256()))
    cpath, kpath = dirpath / "cert.pem", dirpath / "key.pem"
    cpath.write_bytes(cert.public_bytes(serialization.Encoding.PEM))
    kpath.write_bytes(key.private_bytes(serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8,
                                        serialization.NoEncryption()))
    return str(cpath), str(kpath)


def answer(query: bytes, pad_block: int | None, big: int = 0, rcode: int = 0) -> bytes:
    """A record answer, optionally with a TXT of ``big`` bytes to grow the response."""
    records = [(1, bytes([93, 184, 216, 34]))]
    if big:
        chunks = b""
        left = big
        while left > 0:
            n = min(255, left)
            chunks += bytes([n]) + b"x" * n
            left -= n
        records.append((16, chunks))
    return build_response(query, records, pad_block=pad_block, rcode=rcode)


class DotServer:
    """TLS on an ephemeral port; ``behaviour(i, query) -> bytes | None`` (None closes)."""

    def __init__(self, certfile: str, keyfile: str, behaviour):
        self.behaviour = behaviour
        self.ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
        self.ctx.load_cert_chain(certfile, keyfile)
        self.sock = socket.create_server(("127.0.0.1", 0))
        self.port = self.sock.getsockname()[1]
        self.count = 0
        self._stop = False
        self.thread = threading.Thread(target=self._serve, daemon=True)
        self.thread.start()

    def _serve(self):
        self.sock.settimeout(0.2)
        while not self._stop:
            try:
                raw, _ = self.sock.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._handle, args=(raw,), daemon=True).start()

    def _recv(self, conn, n):
        buf = b""
        while len(buf) < n:
            chunk = conn.recv(n - len(buf))
            if not chunk:
                raise ConnectionError
            buf += chunk
        return buf

    def _handle(self, raw):
        try:
            conn = self.ctx.wrap_socket(raw, server_side=True)
        except (ssl.SSLError, OSError):
            raw.close()
            return
        try:
            while True:
                (n,) = struct.unpack("!H", self._recv(conn, 2))
                query = self._recv(conn, n)
                resp = self.behaviour(self.count, query)
                self.count += 1
                if resp is None:
                    break
                conn.sendall(struct.pack("!H", len(resp)) + resp)
        except (ConnectionError, OSError, ssl.SSLError):
            pass
        finally:
            conn.close()

    def close(self):
        self._stop = True
        self.sock.close()
        self.thread.join(timeout=2)


class _DohHandler(http.server.BaseHTTPRequestHandler):
    def log_message(self, *args):
        pass

    def _reply(self, query: bytes | None):
        srv = self.server
        srv.seen.append((self.command, self.path, dict(self.headers), query))
        if query is None:
            self.send_error(400)
            return
        status, body = srv.behaviour(len(srv.seen) - 1, query)
        self.send_response(status)
        self.send_header("Content-Type", "application/dns-message")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        qs = urllib.parse.parse_qs(urllib.parse.urlparse(self.path).query)
        val = qs.get("dns", [None])[0]
        query = None
        if val is not None:
            query = base64.urlsafe_b64decode(val + "=" * (-len(val) % 4))
        self._reply(query)

    def do_POST(self):
        n = int(self.headers.get("Content-Length", 0))
        self._reply(self.rfile.read(n))


class DohServer:
    """Plain HTTP on an ephemeral port; ``behaviour(i, query) -> (status, body)``."""

    def __init__(self, behaviour):
        self.httpd = socketserver.ThreadingTCPServer(("127.0.0.1", 0), _DohHandler)
        self.httpd.daemon_threads = True
        self.httpd.behaviour = behaviour
        self.httpd.seen = []
        self.port = self.httpd.server_address[1]
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def seen(self):
        return self.httpd.seen

    def url(self, template="{?dns}"):
        return f"http://127.0.0.1:{self.port}/dns-query{template}"

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()
