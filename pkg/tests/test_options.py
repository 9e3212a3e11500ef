from cavvex.options import build_parser, setting_overrides


def test_build_parser_parses_a_solver_run() -> None:
    parser = build_parser()
    args = parser.parse_args(
        ["--spec", "specs/aumann_maschler.json", "--command", "mz", "--grid-m", "40", "--verify"]
    )

    assert args.spec == "specs/aumann_maschler.json"
    assert args.command == "mz"
    assert args.grid_m == 40
    assert args.verify
    assert args.out == "out"
    assert args.action is None


def test_setting_overrides_skip_unset_flags() -> None:
    parser = build_parser()
    args = parser.parse_args(["--command", "hj", "--dt", "0.05", "--seed", "3"])

    assert setting_overrides(args) == {"dt": 0.05, "seed": 3}


def test_build_parser_parses_config_init() -> None:
    parser = build_parser()
    args = parser.parse_args(["config", "init", "--env", "local.env"])

    assert args.action == "config"
    assert args.config_command == "init"
    assert args.env == "local.env"


def test_build_parser_config_show_defaults_to_dot_env() -> None:
    parser = build_parser()
    args = parser.parse_args(["config", "show"])

    assert args.config_command == "show"
    assert args.env == ".env"


def test_n_max_flag() -> None:
    parser = build_parser()
    args = parser.parse_args(["--command", "vn", "--n-max", "4"])

    assert args.n_max == 4
    assert setting_overrides(args) == {"n_max": 4}
