#!/usr/bin/env node
const scale = require('d3-scale');
console.log('usage: spectra-plot <peaks.csv>');
