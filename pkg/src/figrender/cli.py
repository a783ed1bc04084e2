"""Command-line entry point: render one figure family per invocation."""

from __future__ import annotations

import click

from .render import FAMILIES, FigureSpec, SchemaMismatch, render


@click.group()
def main():
    """Render figures from long-format experiment CSV files."""


@main.command("render")
@click.option("--family", type=click.Choice(FAMILIES), required=True)
@click.option("--in", "inputs", type=click.Path(exists=True), multiple=True, required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--count", type=int, default=40, show_default=True,
              help="Numbered points in the fig1 ordering illustration.")
def render_cmd(family, inputs, out, count):
    """Render FAMILY from the input CSVs to a PNG/PDF file."""
    spec = FigureSpec(family=family, inputs=tuple(inputs), out=out,
                      options={"count": count})
    try:
        path = render(spec)
    except SchemaMismatch as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
