"""Drive a live annotation session the way the browser console does.

Starts the HTTP service in-process, creates a session, and answers two
query batches through the JSON API with scripted (ground-truth) labels.
For a human-in-the-loop session, run instead:

    active-ensemble serve --config configs/live_digits.json --port 8000 \
        --static-dir frontend/dist

and open http://127.0.0.1:8000/ in a browser.
"""

import tempfile
import threading
import time

import requests

from active_ensemble.config import build_dataset, config_from_dict
from active_ensemble.service import AnnotationService, make_server

CONFIG = {
    "dataset": {"name": "digits", "n_train": 400, "n_test": 100, "seed": 6},
    "model": {"hidden_widths": [16]},
    "ensemble": {"n_members": 2},
    "schedule": {"initial_budget": 20, "step_budget": 20, "rounds": 2,
                 "epochs_per_round": 6, "batch_size": 16},
    "strategy": "vr",
    "oracle": "live",
    "seeds": [5],
}

service = AnnotationService(checkpoint_dir=tempfile.mkdtemp())
httpd = make_server(service, port=0)
threading.Thread(target=httpd.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{httpd.server_port}"
print(f"service at {base}")

sid = requests.post(f"{base}/api/session", json=CONFIG).json()["session_id"]
print(f"session {sid}")

truth = build_dataset(config_from_dict(CONFIG).dataset).y_train

def wait_ready():
    while True:
        status = requests.get(f"{base}/api/session/{sid}/status").json()
        if status["phase"] != "training":
            return status
        time.sleep(0.2)

status = wait_ready()
while status["phase"] == "awaiting-labels":
    batch = requests.get(f"{base}/api/session/{sid}/batch").json()
    print(f"\nbatch {batch['batch_id']}: {len(batch['items'])} samples, "
          f"scores {batch['items'][0]['score']:.2f}.."
          f"{batch['items'][-1]['score']:.2f}")
    answer = {"batch_id": batch["batch_id"],
              "labels": [{"index": item["index"],
                          "label": int(truth[item["index"]])}
                         for item in batch["items"]]}
    reply = requests.post(f"{base}/api/session/{sid}/labels", json=answer).json()
    print(f"submitted: n_labeled={reply['n_labeled']}")
    status = wait_ready()

print("\nlearning curve:")
for point in status["history"]:
    print(f"  {point['n_labeled']:>3} labels -> {100 * point['accuracy']:.1f}%")
httpd.shutdown()
