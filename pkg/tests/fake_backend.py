"""Misbehaving depth backends for protocol tests.

Usage: python fake_backend.py MODE
"""

import struct
import sys
import time

import numpy as np

from augpipe.depthio import MSG_DEPTH, MSG_ERROR, MSG_HELLO, pack_message, read_message

MODE = sys.argv[1]
stdin, stdout = sys.stdin.buffer, sys.stdout.buffer


def send(t, payload):
    stdout.write(pack_message(t, payload))
    stdout.flush()


read_message(stdin)
if MODE == "hang_hello":
    time.sleep(60)
if MODE == "bad_version":
    send(MSG_HELLO, b"\x02fake")
    sys.exit(0)
if MODE == "refuse":
    send(MSG_ERROR, b"no model")
    sys.exit(0)
send(MSG_HELLO, b"\x01fake")

while True:
    try:
        _, payload = read_message(stdin)
    except Exception:
        break
    fid, w, h = struct.unpack(">III", payload[:12])
    if MODE == "hang":
        time.sleep(60)
    if MODE == "error":
        send(MSG_ERROR, b"boom")
        continue
    if MODE == "wrong_size" and fid == 2:
        w, h = w // 2, h
    if MODE == "wrong_id":
        fid += 1
    depth = np.full((h, w), 1000, dtype=">u2")
    send(MSG_DEPTH, struct.pack(">I", fid) + depth.tobytes())
