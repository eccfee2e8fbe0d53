# Copyright 2026 The hfnrv Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json
import os
from absl import app
from hfnrv import hfnrv
from hfnrv.config import CompressConfig, ConfigError, RunConfig, dump_config
from hfnrv.hfnrv import Options, run, run_config
from hfnrv.media import VideoSequence, load_frames, save_frames
from hfnrv.train import TrainLog
from hfnrv_test_helpers import tiny_model_config, tiny_train_config, tiny_video
import pytest


def _write_config(directory, **train_changes):
    cfg = RunConfig(
        model=tiny_model_config(), train=tiny_train_config(epochs=2, **train_changes)
    )
    path = os.path.join(directory, "run.json")
    with open(path, "w") as f:
        f.write(dump_config(cfg))
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """frames/, run.json and a model trained from them by the train command."""
    root = str(tmp_path_factory.mktemp("cli"))
    frames = os.path.join(root, "frames")
    save_frames(tiny_video(), frames)
    config = _write_config(root)
    model = os.path.join(root, "model.hfnm")
    assert run("train", Options(config=config, input=frames, output=model)) == 0
    return {"root": root, "frames": frames, "config": config, "model": model}


def _path(workspace, name):
    return os.path.join(workspace["root"], name)


def _read_json(path):
    with open(path) as f:
        return json.load(f)


class TestRunConfig:
    def test_flag_overrides(self):
        cfg = run_config(Options(epochs=5, seed=3, ratio=0.3, input="frames/"))
        assert cfg.train.epochs == 5
        assert cfg.train.seed == 3
        assert cfg.compress.prune_ratio == 0.3
        assert cfg.paths.input == "frames/"
        assert cfg.model == RunConfig().model

    def test_preset(self):
        assert run_config(Options(preset="bunny")).model.d_c == 16

    def test_invalid_override(self):
        with pytest.raises(ConfigError, match="compress.prune_ratio"):
            run_config(Options(ratio=1.5))

    def test_config_file(self, tmp_path):
        cfg = run_config(Options(config=_write_config(str(tmp_path)), epochs=9))
        assert cfg.model == tiny_model_config()
        assert cfg.train.epochs == 9


class TestTrain:
    def test_writes_model_and_log(self, workspace):
        assert os.path.getsize(workspace["model"]) > 0
        with open(workspace["model"] + ".log.jsonl") as f:
            log = TrainLog.from_jsonl(f.read())
        assert [r.epoch for r in log.records] == [1, 2]

    def test_encode_alias(self, workspace, tmp_path):
        log_path = str(tmp_path / "train.jsonl")
        opts = Options(
            config=workspace["config"],
            input=workspace["frames"],
            output=str(tmp_path / "m.hfnm"),
            log=log_path,
            epochs=1,
        )
        assert run("encode", opts) == 0
        with open(log_path) as f:
            assert len(f.read().splitlines()) == 1

    def test_missing_input(self, tmp_path):
        assert run("train", Options(output=str(tmp_path / "m.hfnm"))) == 2

    def test_indivisible_frames(self, workspace, tmp_path):
        frames = str(tmp_path / "odd")
        cropped = load_frames(workspace["frames"]).frames[:, :, :14, :]
        save_frames(VideoSequence(cropped), frames)
        opts = Options(
            config=workspace["config"], input=frames, output=str(tmp_path / "m")
        )
        assert run("train", opts) == 2

    def test_bad_config(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"model": {"fusion": "film"}}')
        opts = Options(config=str(path), input="x", output="y")
        assert run("train", opts) == 2


class TestCompressDecode:
    def test_pipeline(self, workspace):
        stream = _path(workspace, "video.hfnr")
        opts = Options(model=workspace["model"], output=stream, ratio=0.2)
        assert run("compress", opts) == 0
        report = _read_json(stream + ".report.json")
        assert report["stream_bytes"] == os.path.getsize(stream)
        assert report["prune_ratio"] == 0.2

        decoded = _path(workspace, "decoded")
        assert run("decode", Options(input=stream, output=decoded)) == 0
        assert sorted(os.listdir(decoded)) == ["000000.png", "000001.png"]

        eval_path = _path(workspace, "eval.json")
        opts = Options(ref=workspace["frames"], recon=decoded, out=eval_path)
        assert run("eval", opts) == 0
        metrics = _read_json(eval_path)
        assert metrics["frames"] == 2
        assert metrics["mean_psnr"] == pytest.approx(report["psnr_after"], abs=0.5)

    def test_compress_uses_config_ratio(self, workspace):
        stream = _path(workspace, "default.hfnr")
        out = _path(workspace, "default.json")
        opts = Options(model=workspace["model"], output=stream, out=out)
        assert run("compress", opts) == 0
        assert _read_json(out)["prune_ratio"] == 0.15

    def test_compress_mismatched_frames(self, workspace, tmp_path):
        frames = str(tmp_path / "one")
        save_frames(tiny_video(frames=1), frames)
        opts = Options(
            model=workspace["model"], input=frames, output=str(tmp_path / "s")
        )
        assert run("compress", opts) == 2

    def test_compress_needs_model(self, tmp_path):
        assert run("compress", Options(output=str(tmp_path / "s"))) == 2

    def test_corrupt_stream(self, workspace, tmp_path):
        stream = _path(workspace, "corrupt-source.hfnr")
        assert run("compress", Options(model=workspace["model"], output=stream)) == 0
        with open(stream, "rb") as f:
            data = bytearray(f.read())
        data[-6] ^= 0xFF
        corrupt = tmp_path / "corrupt.hfnr"
        corrupt.write_bytes(bytes(data))
        out = str(tmp_path / "never")
        assert run("decode", Options(input=str(corrupt), output=out)) == 3
        assert not os.path.exists(out)

    def test_not_a_stream(self, tmp_path):
        path = tmp_path / "frames.raw"
        path.write_bytes(b"RVID" + bytes(40))
        assert run("decode", Options(input=str(path), output=str(tmp_path / "o"))) == 3

    def test_missing_stream(self, tmp_path):
        opts = Options(input=str(tmp_path / "absent"), output=str(tmp_path / "o"))
        assert run("decode", opts) == 2


class TestAnalysis:
    def test_rdcurve(self, workspace):
        out = _path(workspace, "rd.json")
        opts = Options(model=workspace["model"], ratios="0, 0.5", out=out)
        assert run("rdcurve", opts) == 0
        points = _read_json(out)["points"]
        assert [p["prune_ratio"] for p in points] == [0.0, 0.5]
        assert points[1]["bpp"] < points[0]["bpp"]

    @pytest.mark.parametrize("flag, expected", [(None, 3), (0, 0), (1, 1)])
    def test_rdcurve_finetune_epochs(self, tmp_path, monkeypatch, flag, expected):
        cfg = RunConfig(
            model=tiny_model_config(),
            train=tiny_train_config(epochs=1),
            compress=CompressConfig(finetune_epochs=3),
        )
        config = str(tmp_path / "run.json")
        with open(config, "w") as f:
            f.write(dump_config(cfg))
        frames = str(tmp_path / "frames")
        save_frames(tiny_video(), frames)
        model = str(tmp_path / "model.hfnm")
        assert run("train", Options(config=config, input=frames, output=model)) == 0
        calls = []
        monkeypatch.setattr(
            hfnrv, "rd_sweep", lambda *args: calls.append(args[4]) or []
        )
        out = str(tmp_path / "rd.json")
        opts = Options(model=model, finetune_epochs=flag, out=out)
        assert run("rdcurve", opts) == 0
        assert calls == [expected]

    def test_rdcurve_bad_ratios(self, workspace):
        opts = Options(model=workspace["model"], ratios="0,half")
        assert run("rdcurve", opts) == 2

    def test_featmap(self, workspace):
        out = _path(workspace, "features.png")
        opts = Options(model=workspace["model"], output=out, stage=1)
        assert run("featmap", opts) == 0
        assert os.path.getsize(out) > 0

    @pytest.mark.parametrize("changes", [{"stage": 2}, {"frame": 5}])
    def test_featmap_out_of_range(self, workspace, changes):
        opts = Options(
            model=workspace["model"], output=_path(workspace, "f.png"), **changes
        )
        assert run("featmap", opts) == 2

    def test_freqmap(self, workspace):
        out = _path(workspace, "spectrum.png")
        source = os.path.join(workspace["frames"], "000000.png")
        assert run("freqmap", Options(input=source, output=out)) == 0
        assert os.path.getsize(out) > 0

    def test_ablate(self, tmp_path):
        out = str(tmp_path / "table.json")
        opts = Options(
            config=_write_config(str(tmp_path)),
            variants="full,V1,V8",
            frames=1,
            height=16,
            width=16,
            epochs=1,
            out=out,
        )
        assert run("ablate", opts) == 0
        rows = _read_json(out)["rows"]
        assert [r["variant"] for r in rows] == ["full", "V1", "V8"]
        assert rows[1]["decoder_parameters"] < rows[0]["decoder_parameters"]
        assert all(r["l_fre"] >= 0 for r in rows)

    def test_ablate_unknown_variant(self, tmp_path):
        opts = Options(config=_write_config(str(tmp_path)), variants="V42")
        assert run("ablate", opts) == 2

    def test_synth(self, tmp_path):
        out = str(tmp_path / "synth")
        assert run("synth", Options(output=out, frames=2, height=8, width=16)) == 0
        assert load_frames(out).frames.shape == (2, 3, 8, 16)


def test_unknown_command():
    assert run("transcode", Options()) == 2


def test_command_argument_required():
    with pytest.raises(app.UsageError, match="exactly one command"):
        hfnrv._run(["hfnrv"])


def test_train_and_decode_are_deterministic(workspace, tmp_path):
    models = []
    for name in ("a", "b"):
        path = str(tmp_path / f"{name}.hfnm")
        opts = Options(
            config=workspace["config"], input=workspace["frames"], output=path
        )
        assert run("train", opts) == 0
        with open(path, "rb") as f:
            models.append(f.read())
    assert models[0] == models[1]

    stream = str(tmp_path / "v.hfnr")
    assert run("compress", Options(model=str(tmp_path / "a.hfnm"), output=stream)) == 0
    decoded = []
    for name in ("da", "db"):
        out = str(tmp_path / name)
        assert run("decode", Options(input=stream, output=out, format="raw")) == 0
        with open(out, "rb") as f:
            decoded.append(f.read())
    assert decoded[0] == decoded[1]
