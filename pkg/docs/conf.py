# -*- coding: utf-8 -*-
#
# Sphinx configuration for the PolarQuant documentation

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

from polarquant import __version__  # noqa: E402

project = 'PolarQuant'
copyright = '2026, PolarQuant developers'
author = 'PolarQuant developers'
version = __version__
release = __version__

extensions = [
    'sphinx.ext.autodoc',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'
language = None
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
pygments_style = None

html_theme = 'nature'
html_static_path = ['_static']
htmlhelp_basename = 'PolarQuantdoc'

latex_documents = [
    (master_doc, 'PolarQuant.tex', 'PolarQuant Documentation', author, 'manual'),
]
man_pages = [
    (master_doc, 'polarquant', 'PolarQuant Documentation', [author], 1)
]
texinfo_documents = [
    (master_doc, 'PolarQuant', 'PolarQuant Documentation', author, 'PolarQuant',
     'Polar-coordinate quantization of embeddings.', 'Miscellaneous'),
]
epub_title = project
epub_exclude_files = ['search.html']
