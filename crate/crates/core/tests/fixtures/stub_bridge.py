"""Model-free detector bridge used by the client tests.

Usage: stub_bridge.py [ok|badproto|silent|oob]
"""
import json
import sys

mode = sys.argv[1] if len(sys.argv) > 1 else "ok"

if mode == "silent":
    sys.exit(3)

print(json.dumps({"protocol": 2 if mode == "badproto" else 1, "classes": [0, 1, 2], "max_input_px": 4096}), flush=True)

for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    try:
        req = json.loads(line)
        rid = req["id"]
        x0, y0, w, h = req["window"]
    except Exception as exc:  # malformed request
        print(json.dumps({"id": -1, "error": str(exc)}), flush=True)
        continue
    if x0 == 13:
        out = {"id": rid, "error": "refusing window at x0=13"}
    elif mode == "oob":
        out = {"id": rid, "detections": [{"class": 1, "bbox": [0, 0, w + 5, 10], "conf": 0.5}]}
    else:
        # one fixed box in the window's top-left quadrant
        bx, by = w // 4, h // 4
        out = {"id": rid, "detections": [{"class": (x0 // 7 + y0) % 3, "bbox": [bx, by, bx + 20, by + 20], "conf": 0.8}]}
    print(json.dumps(out), flush=True)
