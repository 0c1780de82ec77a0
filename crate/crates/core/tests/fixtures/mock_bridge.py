"""Stand-in for an external model process speaking the NDJSON bridge protocol.

Predicts the mean of train_y for every test row. The first argument selects
a misbehaviour: ok, noisy, error, sleep, garbage, short, wrong_id, die.
An optional second argument names a file that receives every request line.
"""
import json
import sys
import time

mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
log = open(sys.argv[2], "a") if len(sys.argv) > 2 else None


def reply(req_id, status, payload):
    if mode == "noisy":
        sys.stdout.write("\n   \n")
    sys.stdout.write(json.dumps({"id": req_id, "status": status, "payload": payload}) + "\n")
    sys.stdout.flush()


for line in sys.stdin:
    if log:
        log.write(line)
        log.flush()
    req = json.loads(line)
    op, req_id, payload = req["op"], req["id"], req.get("payload") or {}
    if op == "hello":
        if mode == "die":
            sys.exit(3)
        reply(req_id, "ok", {"name": "mock", "mode": mode})
    elif op == "shutdown":
        reply(req_id, "ok", {})
        break
    elif op == "fit_predict":
        if mode == "error":
            reply(req_id, "error", {"message": "model exploded"})
            continue
        if mode == "sleep":
            time.sleep(30)
        if mode == "garbage":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        ys = payload["train_y"]
        mean = sum(ys) / len(ys)
        n = len(payload["test_x"]) - (1 if mode == "short" else 0)
        reply(req_id + (7 if mode == "wrong_id" else 0), "ok", {"pred": [mean] * n})
    else:
        reply(req_id, "error", {"message": "unknown op " + op})
