"""``lassoviz`` command line: dataset generation, training, selection, explanation
and the evaluation protocols. Every command writes into ``<out>/<command>/`` and
leaves a ``run.json`` next to its artifacts."""
import argparse
import json
import logging
import os
import sys
import time

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
OUT_ENV = "LASSOVIZ_OUT"
DEFAULT_OUT = "lassoviz-out"
MODES = ("ours", "deconv_gb_vanilla", "upsampled_activation")
REFERENCE_TABLE1 = {  # mu = 10, AUC-IoU in percent
    "single-6c": {"upsampled_activation": 16.8, "deconv_gb_vanilla": 21.3, "ours": 22.5},
    "double-12c": {"upsampled_activation": 16.1, "deconv_gb_vanilla": 21.9, "ours": 23.2},
}

log = logging.getLogger("lassoviz")


class ConfigError(Exception):
    pass


def _positive(kind):
    def check(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return check


def _folds(text):
    if text == "all":
        return list(range(5))
    try:
        folds = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fold list {text!r}") from None
    if any(not 0 <= f < 5 for f in folds):
        raise argparse.ArgumentTypeError("folds must lie in 0..4")
    return folds


def _thresholds(text):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold list {text!r}") from None
    if any(not 0 < v <= 1 for v in vals) or sorted(vals) != vals or len(set(vals)) != len(vals):
        raise argparse.ArgumentTypeError("thresholds must be increasing values in (0, 1]")
    return vals


def build_parser():
    p = argparse.ArgumentParser(prog="lassoviz", description=__doc__.split("\n")[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive(int), default=None,
                   help="BLAS threads (default: logical cores)")
    p.add_argument("--out", default=None, help=f"output root (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def cmd(name, help_text):
        return sub.add_parser(name, help=help_text)

    def dataset(sp, required=True):
        sp.add_argument("--dataset", required=required,
                        help="flower tree (directory with manifest.json) or MNIST IDX directory")

    def model_args(sp):
        dataset(sp)
        sp.add_argument("--model", help="trained model file (trained on the fly when omitted)")
        sp.add_argument("--weights", help="W file (selected on the fly when omitted)")
        sp.add_argument("--folds", type=_folds, default=[0], help="comma list or 'all'")
        sp.add_argument("--mu", type=_positive(float), default=10.0)
        sp.add_argument("-k", type=_positive(int), default=3)

    sp = cmd("gen-dataset", "render an an8Flower-style dataset")
    sp.add_argument("--variant", default="single-6c", choices=("single-6c", "double-12c", "part-2c"))
    sp.add_argument("--profile", default="full", choices=("full", "mini"))

    sp = cmd("train", "train a classifier")
    dataset(sp)
    sp.add_argument("--fold", type=int, default=None, help="hold out this fold (flower data)")
    sp.add_argument("--epochs", type=_positive(int))
    sp.add_argument("--lr", type=_positive(float))
    sp.add_argument("--batch-size", type=_positive(int))
    sp.add_argument("--subset", type=int, default=None, help="use the first N training images")

    sp = cmd("extract", "write the descriptor matrices X and L")
    dataset(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--fold", type=int, default=None, help="use the training part of this fold")
    sp.add_argument("--subset", type=int, default=None)

    sp = cmd("select", "solve the mu-lasso and write the W file")
    sp.add_argument("--matrices", required=True)
    sp.add_argument("--model", required=True, help="model the matrices were extracted from")
    sp.add_argument("--mu", type=_positive(float), default=10.0)
    sp.add_argument("--tol", type=_positive(float), default=1e-6)
    sp.add_argument("--max-iter", type=_positive(int), default=500)

    sp = cmd("explain", "explain one image")
    sp.add_argument("--model", required=True)
    sp.add_argument("--weights", required=True)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--image", help="PNG file")
    src.add_argument("--index", type=int, help="sample index into --dataset")
    dataset(sp, required=False)
    sp.add_argument("-k", type=_positive(int), default=3)
    sp.add_argument("--mode", default="ours", choices=MODES)

    sp = cmd("interpret", "average receptive-field patches of relevant features")
    dataset(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--weights", required=True)
    sp.add_argument("--classes", default=None, help="comma list (default: all)")
    sp.add_argument("--top-n", type=_positive(int), default=100)
    sp.add_argument("--rank-by", default="descriptor", choices=("descriptor", "raw"))
    sp.add_argument("--all-classes", action="store_true", help="do not restrict images to the class")

    sp = cmd("eval-ablation", "accuracy after zeroing selected / random features")
    model_args(sp)
    sp.add_argument("--steps", type=_positive(int), default=5)
    sp.add_argument("--random-seeds", type=_positive(int), default=5)

    sp = cmd("eval-iou", "AUC of the IoU curve against ground-truth masks")
    model_args(sp)
    sp.add_argument("--modes", default=",".join(MODES))
    sp.add_argument("--thresholds", type=_thresholds, default=None)

    sp = cmd("eval-occlusion", "heatmap-guided vs random occlusion")
    model_args(sp)
    sp.add_argument("--mode", default="ours", choices=MODES)
    sp.add_argument("--random-seeds", type=_positive(int), default=5)
    sp.add_argument("--coverage", type=float, default=0.30)
    sp.add_argument("--max-images", type=int, default=None)

    sp = cmd("eval-sanity", "cross-class vs same-class heatmap dissimilarity")
    model_args(sp)
    sp.add_argument("--mode", default="ours", choices=MODES)
    sp.add_argument("--images", type=_positive(int), default=20)

    sp = cmd("eval-reconstruction", "held-out mean ROC-AUC of X^T W over mu")
    model_args(sp)
    sp.add_argument("--mus", default="1,5,10,20")

    sp = cmd("report", "collate eval-iou tables into a summary")
    sp.add_argument("--results", required=True, nargs="+", help="eval-iou TSV files or directories")
    return p


# --- helpers -------------------------------------------------------------

def _out_dir(args):
    root = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    path = os.path.join(root, args.command)
    os.makedirs(path, exist_ok=True)
    return path


def _dataset_tag(ds, path):
    meta = os.path.join(path, "manifest.json")
    if os.path.exists(meta):
        with open(meta) as fh:
            return "flower", json.load(fh)["variant"]
    return "mnist", "idx"


def _load(path, split="train"):
    from .pipeline import load_dataset

    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset not found: {path}")
    return load_dataset(path, split)


def _train_part(ds, fold, subset=None):
    if fold is not None:
        ds = ds.split(fold)[0]
    if subset:
        import numpy as np

        ds = ds.subset(np.arange(min(subset, len(ds))))
    return ds


def _test_part(args, ds, fold):
    if ds.folds is not None:
        return ds.split(fold)[1]
    return _load(args.dataset, "test")


def _fold_models(args, ds, fold):
    """(net, W, train matrices or None) for one fold, loading files when given."""
    from .descriptor import build_matrices
    from .network import load_model
    from .pipeline import FoldRun
    from .selector import RelevanceMatrix

    if args.model:
        net = load_model(args.model)
        train = _train_part(ds, fold if ds.folds is not None else None)
        mats = None
        if args.weights:
            W = RelevanceMatrix.load(args.weights)
        else:
            from .selector import solve_mu_lasso

            mats = build_matrices(net, train.images, train.labels)
            W, _ = solve_mu_lasso(mats, args.mu)
        return net, W, mats
    if ds.folds is None:
        raise ConfigError("--model is required for datasets without folds")
    fr = FoldRun(ds, fold, args.mu, args.seed)
    return fr.net, fr.W, fr.mats


def _tag(args, ds, mode):
    kind, variant = _dataset_tag(ds, args.dataset)
    return dict(dataset=kind, variant=variant, mode=mode, mu=args.mu, k=args.k, seed=args.seed)


# --- commands ------------------------------------------------------------

def cmd_gen_dataset(args, out):
    from .flowergen import tree_checksum
    from .pipeline import flower_spec
    from .flowergen import generate_dataset

    spec = flower_spec(args.variant, args.profile)
    manifest = generate_dataset(spec, out, args.seed)
    digest = tree_checksum(manifest.root)
    print(f"{manifest.root}\t{len(manifest.samples)} samples\tsha256 {digest}")
    return {"root": manifest.root, "samples": len(manifest.samples), "sha256": digest}


def cmd_train(args, out):
    from dataclasses import replace

    from .network import accuracy, save_model
    from .pipeline import default_hyperparams, train_model

    ds = _load(args.dataset)
    train = _train_part(ds, args.fold, args.subset)
    hp = default_hyperparams(ds)
    hp = replace(hp, **{k: v for k, v in (("epochs", args.epochs), ("lr", args.lr),
                                          ("batch_size", args.batch_size)) if v is not None})
    net = train_model(train, args.seed, hp)
    path = os.path.join(out, "model.llnet")
    save_model(net, path)
    result = {"model": path, "hyperparams": vars(hp), "history": net.history}
    if args.fold is not None or ds.folds is None:
        test = _test_part(args, ds, args.fold)
        result["test_accuracy"] = accuracy(net, test.images, test.labels)
        print(f"test accuracy {result['test_accuracy']:.4f}")
    return result


def cmd_extract(args, out):
    from .descriptor import build_matrices
    from .network import load_model

    net = load_model(args.model)
    train = _train_part(_load(args.dataset), args.fold, args.subset)
    mats = build_matrices(net, train.images, train.labels)
    path = os.path.join(out, "matrices.txt")
    mats.dump(path)
    return {"matrices": path, "m": mats.X.shape[0], "N": mats.X.shape[1]}


def cmd_select(args, out):
    from .descriptor import DatasetMatrices, layout_of
    from .network import load_model
    from .selector import SPGOptions, solve_mu_lasso

    layout = layout_of(load_model(args.model))
    mats = DatasetMatrices.load(args.matrices, layout)
    if mats.X.shape[0] != layout.size:
        raise ConfigError(f"matrices have m={mats.X.shape[0]} rows, model descriptor has {layout.size}")
    W, report = solve_mu_lasso(mats, args.mu, SPGOptions(tol=args.tol, max_iter=args.max_iter))
    path = os.path.join(out, f"W_mu{args.mu:g}.txt")
    W.save(path)
    print(f"{path}\tnnz {W.nnz()}\tobjective {report.objective:.6g}")
    return {"weights": path, "nnz": W.nnz(), "objective": report.objective,
            "iterations": report.iterations, "max_l1_excess": report.max_l1_excess}


def cmd_explain(args, out):
    import numpy as np
    from PIL import Image

    from .explain import explain_image, save_bundle
    from .network import load_model
    from .selector import RelevanceMatrix
    from .tensor import nn_resize

    net = load_model(args.model)
    W = RelevanceMatrix.load(args.weights)
    names = None
    if args.image:
        with Image.open(args.image) as im:
            arr = np.asarray(im.convert("RGB" if net.in_channels == 3 else "L"), dtype=np.float32) / 255.0
        arr = arr.transpose(2, 0, 1) if arr.ndim == 3 else arr[None]
        img = arr[None]
        if img.shape[-1] != net.input_side or img.shape[-2] != net.input_side:
            img = nn_resize(img, net.input_side, net.input_side)
    else:
        if not args.dataset:
            raise ConfigError("--index needs --dataset")
        ds = _load(args.dataset, "test")
        if not 0 <= args.index < len(ds):
            raise ConfigError(f"index {args.index} outside 0..{len(ds) - 1}")
        img = ds.images[args.index:args.index + 1]
        names = ds.class_names
    expl = explain_image(net, W, img, args.k, args.mode)
    save_bundle(expl, out, names)
    print(f"predicted {expl.predicted_class} ({expl.confidence:.3f}); "
          f"features {' '.join(str(f) for f in expl.features)}")
    return {"predicted": expl.predicted_class, "confidence": expl.confidence,
            "features": [str(f) for f in expl.features], "note": expl.note}


def cmd_interpret(args, out):
    from .explain import average_visualization
    from .network import load_model
    from .selector import RelevanceMatrix

    net = load_model(args.model)
    W = RelevanceMatrix.load(args.weights)
    ds = _load(args.dataset)
    classes = range(W.C) if args.classes is None else [int(c) for c in args.classes.split(",")]
    rows = []
    for j in classes:
        if not 0 <= j < W.C:
            raise ConfigError(f"class {j} outside 0..{W.C - 1}")
        for av in average_visualization(net, W, j, ds.images, ds.labels, args.top_n,
                                        not args.all_classes, args.rank_by):
            if av.count == 0:
                continue
            name = f"avg_c{j}_{av.feature}.png"
            av.to_png(os.path.join(out, name))
            rows.append((j, av.feature.layer, av.feature.filter, av.count, name))
    from .evaluation import write_table

    write_table(os.path.join(out, "interpret.tsv"), ["class", "layer", "filter", "count", "file"], rows)
    return {"patches": len(rows)}


def cmd_eval_ablation(args, out):
    import numpy as np

    from . import evaluation as E

    ds = _load(args.dataset)
    rows, csv_rows = [], []
    for fold in args.folds:
        net, W, mats = _fold_models(args, ds, fold)
        test = _test_part(args, ds, fold)
        layout = E.layout_of(net)
        feats = E.features_by_relevance(W, layout)
        if mats is None:
            from .descriptor import build_matrices

            train = _train_part(ds, fold if ds.folds is not None else None)
            mats = build_matrices(net, train.images, train.labels)
        _, conv_feats = E.only_conv_selection(mats, args.mu, net)
        n_max = len(feats)
        schedule = sorted({int(round(n_max * s / args.steps)) for s in range(args.steps + 1)})
        curves = [
            E.ablation_curve(net, [], test.images, test.labels, schedule, "Original"),
            E.ablation_curve(net, feats, test.images, test.labels, schedule, "All"),
            E.ablation_curve(net, conv_feats, test.images, test.labels,
                             [min(n, len(conv_feats)) for n in schedule], "OnlyConv"),
            E.ablation_curve(net, None, test.images, test.labels, schedule, "Random",
                             pool=E.layer_pool(net), seeds=args.random_seeds, seed=args.seed),
        ]
        base = curves[0].accuracy[0]
        for c in curves:
            rows.append((fold, c.condition, c.schedule[-1], base, c.accuracy[-1], base - c.accuracy[-1],
                         c.std[-1]))
            for n, a, s in zip(c.schedule, c.accuracy, c.std):
                csv_rows.append((fold, c.condition, n, a, s))
    tag = _tag(args, ds, "ablation")
    tsv = os.path.join(out, E.result_name("ablation", **tag))
    E.write_table(tsv, ["fold", "condition", "removed", "original_mca", "final_mca", "drop", "std"], rows)
    E.write_table(os.path.join(out, E.result_name("ablation-curve", **tag, ext="csv")),
                  ["fold", "condition", "removed", "mca", "std"], csv_rows, sep=",")
    for r in rows:
        print("\t".join(E._fmt(v) for v in r))
    drops = {c: float(np.mean([r[5] for r in rows if r[1] == c])) for c in ("All", "OnlyConv", "Random")}
    return {"table": tsv, "mean_drop": drops}


def cmd_eval_iou(args, out):
    from . import evaluation as E

    ds = _load(args.dataset)
    if ds.masks is None:
        raise ConfigError("eval-iou needs a dataset with masks")
    modes = args.modes.split(",")
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown mode {m!r}")
    thr = tuple(args.thresholds) if args.thresholds else E.DEFAULT_THRESHOLDS
    results = {m: [] for m in modes}
    for fold in args.folds:
        net, W, _ = _fold_models(args, ds, fold)
        test = _test_part(args, ds, fold)
        for m in modes:
            results[m].append(E.iou_auc(net, W, test.images, test.masks, m, thr, args.k, fold))
    paths = []
    for m in modes:
        tag = _tag(args, ds, m)
        rows = [(r.fold, m, r.auc, r.n_images, r.excluded) for r in results[m]]
        mean, std = E.mean_std([r.auc for r in results[m]])
        rows.append(("mean", m, mean, std, "std-over-folds"))
        path = os.path.join(out, E.result_name("iou", **tag))
        E.write_table(path, ["fold", "mode", "auc", "n_images", "excluded"], rows)
        E.write_table(os.path.join(out, E.result_name("iou-curve", **tag, ext="csv")),
                      ["fold", "threshold", "mean_iou"],
                      [(r.fold, t, v) for r in results[m] for t, v in zip(r.thresholds, r.mean_iou)], sep=",")
        paths.append(path)
        print(f"{m}\t{mean:.2f} +- {std:.2f}\t" + " ".join(f"{r.auc:.2f}" for r in results[m]))
    return {"tables": paths, "auc": {m: [r.auc for r in results[m]] for m in modes}}


def cmd_eval_occlusion(args, out):
    from . import evaluation as E

    ds = _load(args.dataset)
    rows, summary = [], {}
    for fold in args.folds:
        net, W, _ = _fold_models(args, ds, fold)
        test = _test_part(args, ds, fold)
        images = test.images if args.max_images is None else test.images[:args.max_images]
        res = E.occlusion_comparison(net, W, images, args.mode, args.k, args.random_seeds, args.seed,
                                     args.coverage)
        rows.append((fold, args.mode, res.guided_drop.mean(), res.random_drop.mean(), res.t_stat,
                     res.p_value, len(images)))
        summary[fold] = {"guided": float(res.guided_drop.mean()), "random": float(res.random_drop.mean()),
                         "p_value": res.p_value}
        print(f"fold {fold}: guided {res.guided_drop.mean():.4f} random {res.random_drop.mean():.4f} "
              f"p={res.p_value:.3g}")
    path = os.path.join(out, E.result_name("occlusion", **_tag(args, ds, args.mode)))
    E.write_table(path, ["fold", "mode", "guided_drop", "random_drop", "t", "p_value", "n_images"], rows)
    return {"table": path, "folds": summary}


def cmd_eval_sanity(args, out):
    from . import evaluation as E
    from .pipeline import flower_spec

    ds = _load(args.dataset)
    if not ds.meta or "frame" not in ds.meta[0]:
        raise ConfigError("eval-sanity needs a generated flower dataset")
    with open(os.path.join(args.dataset, "manifest.json")) as fh:
        manifest = json.load(fh)
    spec = flower_spec(manifest["variant"], manifest["spec"]["profile"])
    rows = []
    for fold in args.folds:
        net, W, _ = _fold_models(args, ds, fold)
        test = _test_part(args, ds, fold)
        res = E.sanity_study(net, W, spec, test, args.images, args.k, args.mode)
        rows.append((fold, args.mode, res.cross.mean(), res.same.mean(), len(res.same),
                     ",".join(map(str, res.missing)) or "-"))
        print(f"fold {fold}: cross {res.cross.mean():.4f} same {res.same.mean():.4f}")
    path = os.path.join(out, E.result_name("sanity", **_tag(args, ds, args.mode)))
    E.write_table(path, ["fold", "mode", "cross_class", "same_class", "pairs", "missing_classes"], rows)
    return {"table": path}


def cmd_eval_reconstruction(args, out):
    from . import evaluation as E
    from .descriptor import build_matrices
    from .selector import solve_mu_lasso

    try:
        mus = [float(m) for m in args.mus.split(",")]
    except ValueError:
        raise ConfigError(f"bad --mus {args.mus!r}") from None
    ds = _load(args.dataset)
    rows = []
    for fold in args.folds:
        net, _, mats = _fold_models(args, ds, fold)
        if mats is None:
            train = _train_part(ds, fold if ds.folds is not None else None)
            mats = build_matrices(net, train.images, train.labels)
        test = _test_part(args, ds, fold)
        held = build_matrices(net, test.images, test.labels)
        for mu in mus:
            W, _ = solve_mu_lasso(mats, mu)
            res = E.reconstruction_auc(held, W)
            rows.append((fold, mu, res.mean_auc, W.nnz(), ",".join(map(str, res.skipped)) or "-"))
            print(f"fold {fold} mu {mu:g}: mean-AUC {res.mean_auc:.4f}")
    path = os.path.join(out, E.result_name("reconstruction", **_tag(args, ds, "xw")))
    E.write_table(path, ["fold", "mu", "mean_auc", "nnz", "skipped_classes"], rows)
    return {"table": path}


def cmd_report(args, out):
    import glob

    from . import evaluation as E

    files = []
    for p in args.results:
        files.extend(sorted(glob.glob(os.path.join(p, "iou_*.tsv"))) if os.path.isdir(p) else [p])
    if not files:
        raise FileNotFoundError("no iou_*.tsv tables found")
    rows = []
    for f in files:
        parts = os.path.basename(f)[:-4].split("_")
        variant = parts[2]
        table = E.read_table(f)
        per_fold = [r for r in table if r["fold"] != "mean"]
        mode = per_fold[0]["mode"] if per_fold else "?"
        aucs = [float(r["auc"]) for r in per_fold]
        mean, std = E.mean_std(aucs)
        ref = REFERENCE_TABLE1.get(variant, {}).get(mode, "")
        rows.append((variant, mode, mean, std, " ".join(f"{a:.2f}" for a in aucs), ref))
    rows.sort(key=lambda r: (r[0], MODES.index(r[1]) if r[1] in MODES else 9))
    path = os.path.join(out, "table1.tsv")
    E.write_table(path, ["variant", "mode", "auc_mean", "auc_std_over_folds", "per_fold", "reference"], rows)
    for r in rows:
        print(f"{r[0]}\t{r[1]:<22}\t{r[2]:6.2f} +- {r[3]:5.2f}\treference {r[5]}")
    return {"table": path}


COMMANDS = {
    "gen-dataset": cmd_gen_dataset,
    "train": cmd_train,
    "extract": cmd_extract,
    "select": cmd_select,
    "explain": cmd_explain,
    "interpret": cmd_interpret,
    "eval-ablation": cmd_eval_ablation,
    "eval-iou": cmd_eval_iou,
    "eval-occlusion": cmd_eval_occlusion,
    "eval-sanity": cmd_eval_sanity,
    "eval-reconstruction": cmd_eval_reconstruction,
    "report": cmd_report,
}


def _set_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item"):
        return obj.item()
    return obj


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        _set_threads(args.threads)

    import numpy as np

    from .data import DataFormatError
    from .network import ModelFormatError
    from .tensor import NonFiniteError

    started = time.time()
    try:
        out = _out_dir(args)
        result = COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"lassoviz {args.command}: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, ModelFormatError, FileNotFoundError, IsADirectoryError,
            PermissionError, json.JSONDecodeError) as exc:
        print(f"lassoviz {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"lassoviz {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"lassoviz {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    config = {k: v for k, v in vars(args).items()}
    run_info = {
        "command": args.command,
        "config": _jsonable(config),
        "seed": args.seed,
        "substreams": ["train", "folds", "init", "random-ablation", "occlusion"],
        "threads": args.threads or os.cpu_count(),
        "started": started,
        "finished": time.time(),
        "result": _jsonable(result),
    }
    with open(os.path.join(out, "run.json"), "w") as fh:
        json.dump(run_info, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
