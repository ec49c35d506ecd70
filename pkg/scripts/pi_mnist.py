"""Permutation-invariant MNIST runs at desk scale.

Trains the semi-supervised model (100 balanced labels) and the unsupervised
K=20 model, then reports test error next to the published numbers.  Expect
hours of CPU time.  Nothing is asserted.

    python scripts/pi_mnist.py --data-dir data/mnist --epochs 50
"""

import argparse
import subprocess
import sys
from pathlib import Path

PUBLISHED = {"semi": 1.91, "unsup": 9.7}


def run(*args):
    cmd = [sys.executable, "-m", "catgan", *args]
    print("$", " ".join(cmd), flush=True)
    out = subprocess.run(cmd, check=True, capture_output=True, text=True).stdout
    print(out, end="")
    return out


def matched_error(text):
    for line in text.splitlines():
        if line.startswith("matched error:"):
            return float(line.split(":")[1].strip().rstrip("%"))
    raise RuntimeError(f"no error line in output:\n{text}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data-dir", default="data/mnist")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/pi_mnist")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    configs = {
        "semi": "dataset = mnist\nobjective = catgan_semi\nn_labeled = 100\nk = 10\n",
        "unsup": "dataset = mnist\nobjective = catgan\nk = 20\nmatch_size = 10000\n",
    }
    results = {}
    for name, body in configs.items():
        cfg = out / f"{name}.cfg"
        cfg.write_text(body + f"epochs = {args.epochs}\ndata_dir = {args.data_dir}\nseeds = {args.seed}\n")
        run("train", "--config", str(cfg), "--out", str(out / name))
        text = run("eval", "--checkpoint", str(out / name / "checkpoint.bin"), "--dataset", "mnist-test",
                   "--match-size", "10000", "--out", str(out / name / "matching.csv"))
        results[name] = matched_error(text)

    print("\nmodel        test error   published   gap")
    for name, err in results.items():
        print(f"{name:<12} {err:9.2f}%  {PUBLISHED[name]:9.2f}%  {err - PUBLISHED[name]:+.2f}")


if __name__ == "__main__":
    main()
