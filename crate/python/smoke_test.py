"""Smoke test for the onestep_vqa extension module.

Build and run from the repository root:

    cargo build --release -p onestep-vqa-python --features extension-module
    cp target/release/libonestep_vqa_py.so python/onestep_vqa.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import random
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import onestep_vqa as vqa  # noqa: E402


def write_y4m(path, frames, width, height):
    with open(path, "wb") as f:
        f.write(f"YUV4MPEG2 W{width} H{height} F30:1 Ip A1:1 C420jpeg\n".encode())
        chroma = bytes([128]) * ((width // 2) * (height // 2) * 2)
        for luma in frames:
            f.write(b"FRAME\n")
            f.write(bytes(luma))
            f.write(chroma)


def textured(width, height, n, seed, noise):
    rng = random.Random(seed)
    frames = []
    for t in range(n):
        frames.append([
            max(0, min(255, int(128 + 60 * math.sin((x + 2 * t) / 5.0) * math.cos(y / 7.0) + rng.gauss(0, noise))))
            for y in range(height)
            for x in range(width)
        ])
    return frames


def main():
    w, h = 48, 40
    with tempfile.TemporaryDirectory() as tmp:
        ref = os.path.join(tmp, "ref.y4m")
        cmp = os.path.join(tmp, "cmp.y4m")
        write_y4m(ref, textured(w, h, 4, 1, 2.0), w, h)
        write_y4m(cmp, textured(w, h, 4, 2, 12.0), w, h)

        video = vqa.load_y4m(ref)
        assert (video.width, video.height, len(video)) == (w, h, 4)
        assert len(video.frame(0)) == w * h

        fv = vqa.extract_features(ref, cmp)
        assert len(fv) == 36 and fv.labels == vqa.feature_labels("base")
        assert fv.get("ref.s1.nfs.alpha") == fv.values[0]
        assert len(vqa.extract_features(ref, cmp, "III")) == 76

        si, ti = vqa.siti(ref)
        assert si > 0 and ti > 0

        rng = random.Random(0)
        rows = [[rng.random() for _ in range(3)] for _ in range(40)]
        scores = [10 + 30 * r[0] + 5 * r[1] for r in rows]
        model = vqa.train(rows, scores, cost=16.0, gamma=0.5)
        preds = model.predict_many(rows)
        assert vqa.srocc(preds, scores) > 0.95
        path = os.path.join(tmp, "model.json")
        model.save(path)
        again = vqa.TrainedModel.load(path)
        assert again.predict_many(rows) == preds

        lcc, rmse, params, status = vqa.fit_logistic(preds, scores)
        assert lcc > 0.95 and rmse >= 0 and len(params) == 4, (lcc, rmse, status)

        a = [x + 5 for x in range(20)]
        b = list(range(20))
        assert vqa.wilcoxon_rank_sum(a, b)[0] == 1
        assert vqa.wilcoxon_rank_sum(b, a)[0] == -1

        field = [rng.gauss(0, 10) for _ in range(32 * 32)]
        assert len(vqa.compute_mscn(field, 32, 32)) == 32 * 32
        alpha, sigma = vqa.fit_ggd([rng.gauss(0, 1) for _ in range(20000)])
        assert abs(alpha - 2) < 0.2 and abs(sigma - 1) < 0.05

        ratings = [("s1", 1, "a", 40.0), ("s1", 1, "b", 60.0), ("s2", 1, "a", 30.0), ("s2", 1, "b", 70.0)]
        z = vqa.zscore(ratings)
        assert abs(z[0] + math.sqrt(0.5)) < 1e-12
        assert [m for _, _, m in vqa.mos(ratings)] == [1.0, 100.0]

        contents = [f"c{i // 4}" for i in range(40)]
        report = json.loads(vqa.run_split_evaluation(rows, scores, contents, iterations=5, seed=3))
        assert len(report["srocc"]) == 5 and report["disjointness_violations"] == 0

        try:
            vqa.load_y4m(os.path.join(tmp, "missing.y4m"))
        except OSError:
            pass
        else:
            raise AssertionError("missing file should raise OSError")

    print(f"onestep_vqa {vqa.__version__}: smoke test passed")


if __name__ == "__main__":
    main()
