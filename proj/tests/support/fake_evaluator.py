#!/usr/bin/env python3
# Stand-in for an external harness. argv: mode, checkpoint path.
# Items carry their expected answer after "answer:" in the prompt.
import json
import sys

mode = sys.argv[1]
checkpoint = sys.argv[2] if len(sys.argv) > 2 else ""

items = [json.loads(line) for line in sys.stdin if line.strip()]


def answer(item):
    prompt = item["prompt"]
    return prompt.split("answer:")[-1].strip() if "answer:" in prompt else ""


def emit(obj):
    sys.stdout.write(json.dumps(obj) + "\n")


if mode == "fail":
    sys.stderr.write("model exploded at layer 3\n")
    sys.exit(3)
elif mode == "badjson":
    sys.stdout.write("this is not json\n")
elif mode == "duplicate":
    for it in items:
        emit({"id": it["id"], "response": answer(it)})
    if items:
        emit({"id": items[0]["id"], "response": answer(items[0])})
elif mode == "unknown":
    emit({"id": "no-such-item", "response": "A"})
elif mode == "missing":
    for it in items[1:]:
        emit({"id": it["id"], "response": answer(it)})
elif mode == "reverse":
    for it in reversed(items):
        emit({"id": it["id"], "response": answer(it)})
elif mode == "language":
    for it in items:
        emit({"id": it["id"], "response": answer(it), "language": "fr"})
elif mode == "checkpoint":
    # answers with the size of the checkpoint file, as a number
    import os
    size = os.path.getsize(checkpoint)
    for it in items:
        emit({"id": it["id"], "response": str(size)})
else:
    for it in items:
        emit({"id": it["id"], "response": answer(it)})
