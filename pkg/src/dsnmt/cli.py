"""Command-line entry point: ``dsnmt {translate,profile,gen-toy-model,info}``.

Exit status: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import difflib
import logging
import sys

from .checkpoint import payload_bytes, read_config
from .config import PRESETS, format_count, param_count, preset
from .pipeline import Translator, WorkerConfig, profile_run, translate_file
from .tensor import DType
from .toy import gen_toy_model

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    known_options: set[str] = set()

    def error(self, message: str):
        if "unrecognized arguments" in message:
            bad = message.split(":", 1)[1].split()
            hints = []
            for arg in bad:
                flag = arg.split("=", 1)[0]
                close = difflib.get_close_matches(flag, sorted(self.known_options), n=1)
                if close:
                    hints.append(f"{flag} -> did you mean {close[0]}?")
            if hints:
                message += " (" + "; ".join(hints) + ")"
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")

    def add_argument(self, *args, **kwargs):
        action = super().add_argument(*args, **kwargs)
        _Parser.known_options.update(action.option_strings)
        return action


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_translate_args(p: argparse.ArgumentParser, profile_default=None) -> None:
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--vocab", required=True, help="vocabulary file (one token per line)")
    p.add_argument("--bpe-codes", required=True, help="BPE merges file")
    p.add_argument("--input", required=True, help="source text, one sentence per line")
    p.add_argument("--output", required=True, help="where to write translations")
    p.add_argument("--beam", type=_positive, default=1, help="beam width; 1 = greedy (default)")
    p.add_argument("--batch-size", type=_positive, default=64, help="max sentences per batch (default 64)")
    p.add_argument("--max-tokens", type=_positive, default=4096, help="padded-token budget per batch")
    p.add_argument("--max-src-len", type=_positive, default=120, help="truncate sources to this many tokens")
    p.add_argument("--max-tgt-len", type=_positive, default=200, help="maximum output tokens")
    p.add_argument("--workers", type=_positive, default=1, help="parallel decode streams over line shards")
    p.add_argument("--precision", choices=("fp16", "fp32"), default="fp32", help="compute precision")
    p.add_argument("--no-prune", action="store_true", help="keep finished sentences in the live batch")
    p.add_argument("--profile", metavar="P", default=profile_default,
                   help="write a per-op profile TSV to P")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dsnmt", description="Deep-encoder / shallow-decoder NMT inference engine.")
    sub = parser.add_subparsers(dest="command", metavar="{translate,profile,gen-toy-model,info}",
                                parser_class=_Parser)
    sub.required = True

    t = sub.add_parser("translate", help="translate a text file")
    _add_translate_args(t)

    pr = sub.add_parser("profile", help="translate with per-op profiling forced on")
    _add_translate_args(pr, profile_default="profile.tsv")

    g = sub.add_parser("gen-toy-model", help="write a seeded random checkpoint with vocab and codes")
    g.add_argument("--preset", choices=sorted(PRESETS), required=True)
    g.add_argument("--vocab-size", type=_positive, default=32000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="checkpoint path; .vocab/.codes are written beside it")
    g.add_argument("--dtype", choices=("fp16", "fp32"), default="fp32", help="on-disk precision")
    g.add_argument("--enc-layers", type=_positive, help="override the preset's encoder depth")
    g.add_argument("--dec-layers", type=_positive, help="override the preset's decoder depth")
    g.add_argument("--d-model", type=_positive, help="override the model width")
    g.add_argument("--heads", type=_positive, help="override the number of attention heads")
    g.add_argument("--ffn", type=_positive, help="override the feed-forward width")
    g.add_argument("--eos-scale", type=float, default=1.0, help="scale of the EOS embedding row")

    i = sub.add_parser("info", help="print checkpoint configuration and parameter count")
    i.add_argument("--model", required=True)
    return parser


def _worker_config(args) -> WorkerConfig:
    return WorkerConfig(workers=args.workers, batch_size=args.batch_size, max_tokens=args.max_tokens,
                        precision=DType.parse(args.precision), beam=args.beam, max_src_len=args.max_src_len,
                        max_tgt_len=args.max_tgt_len, prune=not args.no_prune)


def _run(args) -> None:
    if args.command in ("translate", "profile"):
        cfg = _worker_config(args)
        translator = Translator.load(args.model, args.vocab, args.bpe_codes, cfg.precision)
        if args.profile:
            profile_run(args.input, translator, cfg, tsv_path=args.profile, output_path=args.output)
        else:
            stats = translate_file(args.input, args.output, translator, cfg)
            print(f"{stats.sentences} sentences, {stats.source_tokens} source tokens, "
                  f"{stats.wall:.2f}s, {stats.tokens_per_sec:.1f} tokens/s", file=sys.stderr)
    elif args.command == "gen-toy-model":
        overrides = {"vocab_size": args.vocab_size}
        for flag, field in (("enc_layers", "enc_layers"), ("dec_layers", "dec_layers"),
                            ("d_model", "d_model"), ("heads", "n_heads"), ("ffn", "d_ffn")):
            if getattr(args, flag) is not None:
                overrides[field] = getattr(args, flag)
        cfg = preset(args.preset, **overrides)
        paths = gen_toy_model(cfg, args.seed, args.out, dtype=DType.parse(args.dtype), eos_scale=args.eos_scale)
        print(f"wrote {paths['model']} ({format_count(param_count(cfg))} parameters), "
              f"{paths['vocab']}, {paths['codes']}")
    elif args.command == "info":
        cfg = read_config(args.model)
        n = param_count(cfg)
        for field in ("enc_layers", "dec_layers", "d_model", "n_heads", "d_ffn", "vocab_size", "max_rel_pos",
                      "use_dlcl", "shared_embeddings"):
            print(f"{field}: {getattr(cfg, field)}")
        print(f"parameters: {format_count(n)} ({n})")
        print(f"payload_bytes: {payload_bytes(args.model)}")


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        _run(args)
    except (OSError, ValueError, RuntimeError, MemoryError) as exc:
        print(f"dsnmt: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
