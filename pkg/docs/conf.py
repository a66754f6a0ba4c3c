# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from embedsim.version import __version__  # noqa: E402

project = 'embedsim'
copyright = '2024, bcj'
author = 'bcj'
release = __version__
version = '.'.join(__version__.split('.')[:2])

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.autosectionlabel',
    'sphinx.ext.coverage',
    'sphinx.ext.napoleon',
    'sphinx.ext.todo',
]

templates_path = ['_templates']
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']

# -- extension options

autodoc_member_order = 'bysource'
autodoc_typehints = 'description'
# several pages share section titles
autosectionlabel_prefix_document = True
napoleon_google_docstring = True
todo_include_todos = True

# -- Options for HTML output

html_theme = 'alabaster'
html_theme_options = {
    'description': 'Traffic simulation with embedded learned behaviors',
}
