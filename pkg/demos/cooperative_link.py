"""Two-endpoint cooperative inference against the inline reference path.

The roadside task downsamples and ships one frame over a real loopback TCP
socket; the vehicle task joins on it, upsamples, and plans. The decoded
token sequence must match the non-networked path bit for bit, which is what
the coop-demo subcommand checks with its exit code.
"""

import threading

import numpy as np

from coopdrive.link import (RoadsideEndpoint, TcpChannel, VehicleEndpoint,
                            cooperative_infer, sequential_infer)
from coopdrive.model.config import student_config
from coopdrive.model.network import planner_for
from coopdrive.scenario import make_record, text_tokenizer


def main() -> None:
    tok = text_tokenizer()
    cfg = student_config(vocab_text=tok.vocab_size)
    params = planner_for(cfg).init(seed=0)  # untrained; the contract is equality
    rec = make_record("right-turn", seed=5, index=0)

    accept, port = TcpChannel.listen_one(accept_timeout=10.0)
    print(f"vehicle listening on 127.0.0.1:{port}")
    peer = {}
    t = threading.Thread(
        target=lambda: peer.update(ch=TcpChannel.connect("127.0.0.1", port, 10.0)))
    t.start()
    vehicle_ch = accept()
    t.join()

    scale = 0.5
    roadside = RoadsideEndpoint(rec.infra, peer["ch"], scale=scale)
    vehicle = VehicleEndpoint(rec.vehicle, rec.prompt.text, vehicle_ch, tok, cfg,
                              params, deadline_s=10.0)
    coop = cooperative_infer(vehicle, roadside)
    seq = sequential_infer(rec.vehicle, rec.infra, rec.prompt.text, tok, cfg,
                           params, scale=scale)

    print(f"payload {coop.payload_bytes} bytes at s={scale} "
          f"(full frame would be {rec.infra.size})")
    print(f"decoded {len(coop.token_ids)} tokens")
    print(f"cooperative == sequential: "
          f"{np.array_equal(coop.token_ids, seq.token_ids)}")
    print("first waypoints:", ", ".join(f"({x:.2f}, {y:.2f})"
                                        for x, y in coop.trajectory[:3]))


if __name__ == "__main__":
    main()
