#!/usr/bin/env python3
"""Independent reference for the device frame fixtures.

CRC-16/CCITT-FALSE is taken from binascii.crc_hqx (poly 0x1021, init 0xFFFF,
no reflection, no xorout). Writes one hex file per fixture into tests/data/.
"""
import binascii
import pathlib
import struct

assert binascii.crc_hqx(b"123456789", 0xFFFF) == 0x29B1


def frame(frame_type, device, resource, ts, kind, payload):
    head = struct.pack(">BBBIHQB", 0xA7, 0x01, frame_type, device, resource, ts, kind)
    body = head + payload
    return body + struct.pack(">H", binascii.crc_hqx(body, 0xFFFF))


FIXTURES = {
    "telemetry_dev1_res1_ts0_f0": frame(0x01, 1, 1, 0, 0x01, struct.pack(">d", 0.0)),
    "telemetry_dev42_res3_ts10_f22_5": frame(0x01, 42, 3, 10, 0x01, struct.pack(">d", 22.5)),
    "command_dev42_res7_true": frame(0x81, 42, 7, 5, 0x02, b"\x01"),
    "ack_dev42_res7_false": frame(0x02, 42, 7, 6, 0x02, b"\x00"),
    "heartbeat_dev7_ts40": frame(0x03, 7, 0, 40, 0x02, b"\x01"),
    "text_dev3_res2_hello": frame(0x01, 3, 2, 123456789, 0x03, struct.pack(">H", 5) + b"hello"),
}

if __name__ == "__main__":
    out = pathlib.Path(__file__).resolve().parent.parent / "data"
    out.mkdir(exist_ok=True)
    for name, data in FIXTURES.items():
        (out / f"{name}.hex").write_text(data.hex().upper() + "\n")
        print(name, data.hex().upper(), hex(struct.unpack(">H", data[-2:])[0]))
