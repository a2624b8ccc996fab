"""Independent encoder for the golden vectors in this directory.

Written from the wire format description only (no shared code with the
Rust implementation). Regenerate with: python3 golden.py
"""
import hashlib
import os
import struct
import uuid

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives import serialization

HERE = os.path.dirname(os.path.abspath(__file__))


def sha256(b):
    return hashlib.sha256(b).digest()


def u8(v):
    return struct.pack(">B", v)


def u32(v):
    return struct.pack(">I", v)


def u64(v):
    return struct.pack(">Q", v)


def text(s):
    b = s.encode("utf-8")
    return u32(len(b)) + b


def key(name):
    sk = Ed25519PrivateKey.from_private_bytes(sha256(name.encode()))
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    return sk, pk


def units(decimal_text):
    whole, _, frac = decimal_text.partition(".")
    return int(whole) * 10000 + int((frac + "0000")[:4])


def registration(name, pk):
    return u8(1) + text(name) + pk


def achievement(a):
    out = uuid.UUID(a["student"]).bytes
    out += text(a["course_id"]) + text(a["title"])
    out += u64(units(a["credits"])) + u32(a["hours"])
    out += a["issuer"]
    out += u32(len(a["topics"])) + b"".join(text(t) for t in a["topics"])
    out += u8(1 if a["passed"] else 0)
    out += (u8(1) + u64(units(a["grade"]))) if a["grade"] is not None else u8(0)
    out += u64(a["tick"])
    out += u8({"UniversityExam": 1, "Mooc": 2, "OpenBadge": 3}[a["kind"]])
    return u8(2) + out


def header(height, prev, payload_hash, issuer, timestamp, difficulty, nonce):
    return u64(height) + prev + payload_hash + issuer + u64(timestamp) + u32(difficulty) + u64(nonce)


def write(name, data):
    with open(os.path.join(HERE, name), "w") as f:
        f.write(data.hex() + "\n")


def main():
    root_sk, root_pk = key("root")
    root_id = sha256(root_pk)
    genesis_payload = registration("root", root_pk)
    genesis_header = header(0, bytes(32), sha256(genesis_payload), root_id, 0, 8, 0)
    signature = root_sk.sign(genesis_header)

    _, abroad_pk = key("abroad-u")
    ach = achievement({
        "student": "3f2a9c4e-7b1d-4e8a-9c3b-5d6e7f8a9b0c",
        "course_id": "MA-101",
        "title": "Analysis I",
        "credits": "6.0",
        "hours": 180,
        "issuer": sha256(abroad_pk),
        "topics": ["math", "analysis"],
        "passed": True,
        "grade": "1.3",
        "tick": 42,
        "kind": "Mooc",
    })

    write("genesis_payload.hex", genesis_payload)
    write("genesis_header.hex", genesis_header)
    write("genesis_hash.hex", sha256(genesis_header))
    write("genesis_signature.hex", signature)
    write("achievement_payload.hex", ach)
    write("achievement_hash.hex", sha256(ach))


if __name__ == "__main__":
    main()
