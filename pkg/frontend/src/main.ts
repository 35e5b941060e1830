// Boot the review tool against the same origin that served these assets.

import { ReviewApp } from './app.js'

const root = document.getElementById('app')
if (!root) throw new Error('missing #app container')
void ReviewApp.start(root, '')
