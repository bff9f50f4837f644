"""Walk the bandwidth model across the four operating points.

For each downsampling factor s the roadside stream costs s^2 * W * H * C * f
bytes per second; one 64x96 demo frame shrinks accordingly on the wire. The
table shows the BPS column exactly as the sweep subcommand prints it.
"""

import numpy as np

from coopdrive.link import LinkConfig, bps, decode_frame, downsample, encode_frame, format_bps
from coopdrive.scenario import make_record


def main() -> None:
    link = LinkConfig()  # 1920x1080x3 at 2 Hz
    rec = make_record("left-turn", seed=3, index=0)
    print(f"reference stream: {link.width}x{link.height}x{link.channels} "
          f"at {link.freq:g} Hz")
    print(f"{'s':>5}  {'bytes/s':>10}  {'display':>7}  {'demo frame':>10}")
    for s in (1.0, 0.5, 0.2, 0.1):
        rate = bps(link.at_scale(s))
        small = downsample(rec.infra, s)
        frame = encode_frame(small, scale=s)
        print(f"{s:>5}  {rate:>10,}  {format_bps(rate):>7}  "
              f"{small.shape[0]}x{small.shape[1]} = {small.size:>5} B")
        back, meta = decode_frame(frame)
        assert np.array_equal(back, small) and meta.scale == s

    # quarter resolution costs 1/25th of the bytes; the planner sees the
    # upsampled copy, so accuracy degrades smoothly rather than cliff-edge
    print(f"\ns=0.2 keeps {bps(link.at_scale(0.2)) / bps(link) * 100:.0f}% "
          f"of the full-rate bytes")


if __name__ == "__main__":
    main()
