const helper = require('./util');
helper.ping('203.0.113.5');
