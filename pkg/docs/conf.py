# Configuration file for the Sphinx documentation builder.
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys

sys.path.insert(0, os.path.abspath(".."))

with open(os.path.join("../egocapture4d", "version.txt"), encoding="utf-8") as file_handler:
    __version__ = file_handler.read().strip()

# -- Project information -----------------------------------------------------

project = "egocapture4d"
copyright = "2026, egocapture4d developers"
author = "egocapture4d developers"
release = __version__
version = __version__

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.viewcode",
    "sphinx.ext.napoleon",
    "sphinx.ext.mathjax",
    "sphinx.ext.intersphinx",
    "sphinx_autodoc_typehints",
    "sphinx_copybutton",
    "sphinx-prompt",
    "notfound.extension",
    "myst_parser",
]

notfound_urls_prefix = "/egocapture4d/"
source_suffix = [".rst", ".md"]
master_doc = "index"
language = "en"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
html_title = "egocapture4d"
html_show_sourcelink = False
html_show_sphinx = False
html_theme_options = {
    "prev_next_buttons_location": "bottom",
    "collapse_navigation": False,
    "navigation_depth": 3,
}

# -- Autodoc -----------------------------------------------------------------

autosummary_generate = True
autodoc_typehints = "description"
autodoc_preserve_defaults = True
autodoc_default_options = {
    "members": True,
    "member-order": "bysource",
    "undoc-members": True,
    "show-inheritance": True,
}
napoleon_numpy_docstring = True
napoleon_google_docstring = False

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
    "torch": ("https://pytorch.org/docs/stable/", None),
}

pygments_style = "sphinx"
highlight_language = "python3"
htmlhelp_basename = "egocapture4d-doc"
