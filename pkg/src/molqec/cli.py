"""Command-line entry point: ``molqec <subcommand> [options]``.

Exit status is 0 on success, 1 for input errors (bad flags, missing or
malformed files) and 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, labeling, spectrum, sweep
from .qecsim import (NAMED_CIRCUITS, Circuit, CircuitError, CompileError, LabeledSystem,
                     compile_to_pulses, random_qubit, run_pulse_level)
from .spinsys import SystemParams


class InputError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--preset", choices=("Tb", "Cu"), default=None, help="ion preset (default Cu)")
    p.add_argument("--params", help="SystemParams JSON file; explicit keys override the preset")
    p.add_argument("--out", default="molqec_out", help="output directory")
    p.add_argument("--workers", type=int, default=1, help="worker processes (MOLQEC_WORKERS overrides)")
    p.add_argument("--seed", type=int, default=None, help="random seed")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = _Parser(prog="molqec", description="Electron-nuclear spin trimers as QEC registers.")
    ap.add_argument("--version", action="version", version=f"molqec {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("spectrum", parents=[common], help="energies, tunneling splitting, gap and transitions")

    sp = sub.add_parser("label", parents=[common], help="qubit labels of every eigenstate plus constraint checks")
    sp.add_argument("--support", nargs="+", default=["000000000", "111000000"],
                    help="encoded-state labels for the single-qubit-error check")

    sp = sub.add_parser("sweep", parents=[common], help="separability map over a parameter grid")
    sp.add_argument("--grid", default="default", help="grid JSON file or 'default'")
    sp.add_argument("--resume", help="map.json of an earlier run; only failed points are recomputed")

    for name, helptext in (("compile-pulses", "compile a circuit into selective pulses"),
                           ("qec-run", "pulse-level run of an error-correcting circuit")):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.add_argument("--circuit", default="bitflip", help="circuit JSON file, 'bitflip' or 'shor'")
        sp.add_argument("--forbidden", choices=("flag", "raise"), default="flag",
                        help="what to do with pulses on drive-forbidden transitions")
        if name == "compile-pulses":
            sp.add_argument("--mode", choices=("reachable", "full"), default="reachable")
        else:
            sp.add_argument("--temperature", type=float, default=0.0, help="K, for ESE populations")
    return ap


# -- helpers ----------------------------------------------------------------------------


def _read_json(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def _params(args) -> SystemParams:
    if args.params:
        d = _read_json(args.params)
        if args.preset and "ion" not in d:
            d["ion"] = args.preset
        try:
            return SystemParams.from_json_dict(d)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.params}: {exc}") from None
    return SystemParams.preset(args.preset or "Cu")


def _circuit(spec: str) -> Circuit:
    if spec in NAMED_CIRCUITS:
        return NAMED_CIRCUITS[spec]()
    try:
        return Circuit.from_json_dict(_read_json(spec))
    except CircuitError as exc:
        raise InputError(f"{spec}: {exc}") from None


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


# -- subcommands --------------------------------------------------------------------------


def cmd_spectrum(args) -> int:
    p = _params(args)
    out = _outdir(args)
    spec = spectrum.solve(p)
    summ = spectrum.summarize(spec, p)
    spectrum.save_spectrum(spec, out / "spectrum.bin")
    spectrum.write_summary_json(spec, summ, out / "summary.json")
    spectrum.transition_table(spec).to_csv(out / "transitions.csv")
    print(f"states: {spec.retained} of {spec.source_dim}")
    print(f"ground energy: {spec.energies[0]:.6f} cm-1")
    print(f"tunneling splitting: {summ.tunneling_delta:.6g} cm-1")
    print(f"gap: {summ.gap_omega:.6g} cm-1")
    print(f"wrote {out}/summary.json, {out}/transitions.csv, {out}/spectrum.bin")
    return 0


def cmd_label(args) -> int:
    p = _params(args)
    out = _outdir(args)
    report = labeling.electronic_constraint_report(p)
    actual, _, lab = labeling.label_system(p)
    lab.to_csv(out / "labels.csv")
    inten = spectrum.intensity_matrix(actual, "electronic")
    try:
        support = [lab.index_of(s) for s in args.support]
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    ham = labeling.single_qubit_error_violations(lab.labels, inten, support)
    sign = labeling.first_bit_sign_violations(lab.labels, lab.ms)
    el = report["labeling"]
    print("electronic labels (S, Ms):")
    for k, bits in enumerate(el.bits):
        print(f"  |{bits}>  S={el.total_spin[k]:.3f}  Ms={el.ms[k]:+.3f}  overlap={el.overlaps[k]:.4f}")
    fids = np.array([e.fidelity for e in lab.entries])
    print(f"minimum label fidelity: {fids.min():.8f}")
    print(f"ground state label: |{lab.label_of(0)}>")
    print(f"single-qubit-error check on {len(support)} support states: "
          f"{'ok' if not ham else f'{len(ham)} violations'}")
    print(f"first-bit / sign(Ms) check: {'ok' if not sign else f'{len(sign)} violations'}")
    print(f"wrote {out}/labels.csv")
    return 0


def cmd_sweep(args) -> int:
    workers = sweep.resolve_workers(args.workers)
    try:
        if args.grid == "default":
            grid = sweep.SweepGrid.default(args.preset or "Tb")
        else:
            grid = sweep.SweepGrid.from_json_dict(_read_json(args.grid))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad grid: {exc}") from None
    resume = None
    if args.resume:
        try:
            resume = sweep.map_from_json_dict(_read_json(args.resume))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{args.resume}: {exc}") from None
    out = _outdir(args)
    with open(out / "log.txt", "w") as log_fh:
        def log(msg):
            log_fh.write(msg + "\n")
            log_fh.flush()

        log(f"molqec {__version__} sweep {json.dumps(grid.to_json_dict())} workers={workers}")
        try:
            fmap = sweep.run_sweep(grid, workers=workers, resume=resume, log=log)
        except sweep.SweepAborted as exc:
            sweep.export_all(exc.partial, out)
            log(f"aborted: {exc}")
            raise NumericalError(str(exc)) from None
    sweep.export_all(fmap, out)
    thr = 1e-4 if grid.ion == "Tb" else 1e-6
    print(f"{grid.ion} map {grid.shape[0]}x{grid.shape[1]}: "
          f"{fmap.fraction_below(thr):.0%} of points with 1-f128 < {thr:g}")
    print(f"wrote {out}/map.csv, {out}/map.json, {out}/map.svg, {out}/log.txt")
    return 0


def cmd_compile(args) -> int:
    p = _params(args)
    c = _circuit(args.circuit)
    out = _outdir(args)
    system = LabeledSystem.build(p)
    seq = compile_to_pulses(c, system.labeling, system.electronic_table, system.nuclear_table,
                            mode=args.mode, forbidden=args.forbidden)
    seq.to_csv(out / "pulses.csv")
    print(f"{len(seq)} pulses ({sum(p.channel == 'electronic' for p in seq.pulses)} electronic)")
    print(f"minimum frequency gap between distinct transitions: {seq.min_frequency_gap_ghz():.6g} GHz")
    _report_forbidden(seq)
    print(f"wrote {out}/pulses.csv")
    return 0


def _report_forbidden(seq) -> None:
    bad = seq.forbidden
    if not bad:
        print("all pulses drive allowed transitions")
        return
    print(f"warning: {len(bad)} pulses sit on drive-forbidden transitions", file=sys.stderr)
    for pl in bad[:10]:
        print(f"  gate {pl.gate_index}: |{pl.labels[0]}> <-> |{pl.labels[1]}> "
              f"intensity {pl.intensity:.2e}", file=sys.stderr)


def cmd_qec_run(args) -> int:
    p = _params(args)
    c = _circuit(args.circuit)
    out = _outdir(args)
    rng = np.random.default_rng(args.seed)
    alpha, beta = random_qubit(rng)
    model = c.error_model
    err_seed = model.seed if model is not None and model.seed is not None else args.seed
    system = LabeledSystem.build(p)
    run = run_pulse_level(system, c, alpha, beta, seed=err_seed, forbidden=args.forbidden,
                          temperature=args.temperature)
    run.sequence.to_csv(out / "pulses.csv")
    run.ese.to_csv(out / "ese.csv")
    _report_forbidden(run.sequence)
    m = run.measurement
    print(f"input: alpha={alpha:.6f} beta={beta:.6f}")
    print(f"pulses: {len(run.sequence)}")
    print(f"first-qubit readout: {'indeterminate' if m.indeterminate else m.bit} "
          f"(Ms={m.ms:+.6f}, confidence {m.confidence:.3f})")
    print(f"recovery fidelity {run.pulse_fidelity:.6f}")
    print(f"wrote {out}/pulses.csv, {out}/ese.csv")
    return 0


COMMANDS = {
    "spectrum": cmd_spectrum,
    "label": cmd_label,
    "sweep": cmd_sweep,
    "compile-pulses": cmd_compile,
    "qec-run": cmd_qec_run,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, CircuitError, ValueError) as exc:
        if isinstance(exc, (labeling.LabelingError, CompileError, spectrum.NoResonanceError)):
            print(f"molqec: numerical failure: {exc}", file=sys.stderr)
            return 2
        print(f"molqec: error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, spectrum.ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"molqec: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
