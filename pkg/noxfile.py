import nox

nox.options.sessions = "lint", "tests", "mypy"

locations = ["src/socialcue/"]


@nox.session(python=["3.10", "3.9", "3.8"])
def tests(session):
    args = session.posargs or ["--cov", *locations]
    session.run("poetry", "install", external=True)
    session.run("pytest", *args)


@nox.session(python="3.10")
def lint(session):
    args = session.posargs or locations
    session.run("poetry", "install", external=True)
    session.install("pylint")
    session.run("pylint", *args)


@nox.session(python="3.10")
def black(session):
    args = session.posargs or locations
    session.install("black")
    session.run("black", *args)


@nox.session(python=["3.10", "3.8"])
def mypy(session):
    args = session.posargs or locations
    session.install("mypy", "types-requests")
    session.run("mypy", *args)


@nox.session(python="3.10")
def smoke(session):
    """Run the sample configs end to end on synthetic data."""
    session.run("poetry", "install", external=True)
    out = session.create_tmp()
    session.run("socialcue", "run", "--config", "configs/oracle.json", "--output-dir", f"{out}/oracle")
    session.run(
        "socialcue",
        "sweep",
        "--config",
        "configs/noisy.json",
        "--grid",
        "configs/grid.json",
        "--output-dir",
        f"{out}/sweep",
        "--set",
        "dataset.generate.n_segments=200",
    )
    session.run("socialcue", "report", "--records", f"{out}/oracle")
