def main() -> None:
    from cavvex.cli import main as cli_main

    cli_main()
